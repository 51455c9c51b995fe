#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "mcrb/csv.hpp"
#include "mcrb/error.hpp"
#include "mcrb/experiments.hpp"

using namespace mcrb;
using namespace mcrb::exp;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const std::filesystem::path p = std::filesystem::temp_directory_path() / "mcrb-test-experiments" / name;
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

ExperimentSummary run(nlohmann::json doc, const std::filesystem::path& dir, int workers = 1) {
    RunOptions opt;
    opt.workers = workers;
    opt.output_dir = dir;
    return run_experiment(parse_config(doc), opt);
}

nlohmann::json small_spectrum_rmse() {
    nlohmann::json doc = default_config(ExperimentKind::SpectrumRmse);
    doc["trials"] = 2;
    doc["sweep"] = {600};
    doc["spectrum"]["orders"] = {5, 10, 20};
    doc["spectrum"]["t_large"] = 5000;
    doc["spectrum"]["pseudo_true_runs"] = 3;
    doc["spectrum"]["n_freq"] = 100;
    return doc;
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("every default config is valid") {
        for (auto k : {ExperimentKind::DoaBound, ExperimentKind::DoaRmseSnr, ExperimentKind::DoaRmseT,
                       ExperimentKind::SpectrumBound, ExperimentKind::SpectrumRmse}) {
            const ExperimentConfig cfg = parse_config(default_config(k));
            CHECK(cfg.kind == k);
            CHECK(cfg.trials >= 1);
        }
    }
    SUBCASE("kind names round trip") {
        for (const char* name : {"doa-bound", "doa-rmse-snr", "doa-rmse-T", "spectrum-bound", "spectrum-rmse"}) {
            CHECK(to_string(parse_kind(name)) == name);
        }
        CHECK_THROWS_AS(parse_kind("doa-rmse-N"), ConfigError);
    }
    SUBCASE("missing mandatory field") {
        nlohmann::json doc = default_config(ExperimentKind::DoaBound);
        doc.erase("trials");
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
    }
    SUBCASE("output_dir is optional") {
        nlohmann::json doc = default_config(ExperimentKind::DoaBound);
        doc.erase("output_dir");
        CHECK_FALSE(parse_config(doc).output_dir.has_value());
        doc["output_dir"] = "somewhere";
        CHECK(parse_config(doc).output_dir == std::filesystem::path("somewhere"));
    }
    SUBCASE("invalid values") {
        nlohmann::json doc = default_config(ExperimentKind::DoaRmseSnr);
        doc["trials"] = 0;
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
        doc = default_config(ExperimentKind::DoaRmseSnr);
        doc["sweep"] = nlohmann::json::array();
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
        doc = default_config(ExperimentKind::DoaRmseSnr);
        doc["master_seed"] = -3;
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
        doc = default_config(ExperimentKind::DoaRmseSnr);
        doc["trials"] = "many";
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
        doc = default_config(ExperimentKind::SpectrumRmse);
        doc["spectrum"]["orders"] = {10, 5};
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
        doc = default_config(ExperimentKind::SpectrumRmse);
        doc["sweep"] = {10};
        CHECK_THROWS_AS(parse_config(doc), ConfigError);
    }
    SUBCASE("unreadable file") {
        CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    }
}

TEST_CASE("determinism") {
    SUBCASE("trials=1 twice gives identical bytes") {
        nlohmann::json doc = default_config(ExperimentKind::DoaRmseSnr);
        doc["trials"] = 1;
        doc["sweep"] = {10, 20};
        const ExperimentSummary a = run(doc, scratch("det-a"));
        const ExperimentSummary b = run(doc, scratch("det-b"));
        REQUIRE(a.files.size() == b.files.size());
        for (std::size_t i = 0; i < a.files.size(); ++i) {
            CHECK(slurp(a.files[i]) == slurp(b.files[i]));
        }
    }
    SUBCASE("worker count does not change the output") {
        nlohmann::json doc = default_config(ExperimentKind::DoaRmseSnr);
        doc["trials"] = 8;
        doc["sweep"] = {14};
        const ExperimentSummary a = run(doc, scratch("work-1"), 1);
        const ExperimentSummary b = run(doc, scratch("work-4"), 4);
        CHECK(slurp(a.files.front()) == slurp(b.files.front()));
    }
}

TEST_CASE("CSV schemas") {
    SUBCASE("doa-rmse") {
        nlohmann::json doc = default_config(ExperimentKind::DoaRmseT);
        doc["trials"] = 2;
        doc["sweep"] = {12, 24};
        const ExperimentSummary s = run(doc, scratch("schema-doa"));
        const csv::Table t = csv::read(s.files.front());
        CHECK(t.header == std::vector<std::string>{"sweep_var", "sweep_value", "criterion", "rmse_rad",
                                                   "mean_selected_m", "trials_ok"});
        std::set<std::string> crit;
        for (const auto& r : t.rows) {
            crit.insert(r[t.column("criterion")]);
            CHECK(r[t.column("sweep_var")] == "T");
        }
        CHECK(crit.count("mcrb") == 1);
        CHECK(crit.count("aic") == 1);
        CHECK(crit.count("aicc") == 1);
        CHECK(crit.count("mdl") == 1);
    }
    SUBCASE("bounds") {
        nlohmann::json doc = default_config(ExperimentKind::DoaBound);
        doc["trials"] = 2;
        const ExperimentSummary s = run(doc, scratch("schema-bound"));
        const csv::Table t = csv::read(s.files.front());
        CHECK(t.header == std::vector<std::string>{"sweep_value", "m", "mean_bound", "std_bound"});
        CHECK(t.rows.size() == 11);
    }
    SUBCASE("spectrum-rmse") {
        const ExperimentSummary s = run(small_spectrum_rmse(), scratch("schema-spec"));
        const csv::Table t = csv::read(s.files.front());
        CHECK(t.header ==
              std::vector<std::string>{"T", "criterion", "rmse_log_spectrum", "mean_selected_m", "trials_ok"});
        std::set<std::string> crit;
        for (const auto& r : t.rows) {
            crit.insert(r[t.column("criterion")]);
        }
        for (const char* c : {"mcrb", "aic", "aicc", "mdl"}) {
            CHECK(crit.count(c) == 1);
        }
    }
    SUBCASE("manifest echoes the seed") {
        nlohmann::json doc = default_config(ExperimentKind::DoaBound);
        doc["trials"] = 1;
        const ExperimentSummary s = run(doc, scratch("manifest"));
        const auto it = std::find_if(s.files.begin(), s.files.end(),
                                     [](const auto& p) { return p.extension() == ".json"; });
        REQUIRE(it != s.files.end());
        const nlohmann::json m = nlohmann::json::parse(slurp(*it));
        CHECK(m.dump().find("20240517") != std::string::npos);
    }
}

TEST_CASE("DOA bound experiment has its minimum at the clutter rank") {
    nlohmann::json doc = default_config(ExperimentKind::DoaBound);
    doc["trials"] = 200;
    const ExperimentSummary s = run(doc, scratch("doa-bound"), 4);
    const auto best = std::min_element(s.bounds.begin(), s.bounds.end(),
                                       [](const BoundRow& a, const BoundRow& b) { return a.mean_bound < b.mean_bound; });
    CHECK(best->m == 6);
}

TEST_CASE("plot data") {
    SUBCASE("doa-rmse-snr columns") {
        nlohmann::json doc = default_config(ExperimentKind::DoaRmseSnr);
        doc["trials"] = 2;
        doc["sweep"] = {0, 10};
        const ExperimentSummary s = run(doc, scratch("plot-snr"));
        const csv::Table p = csv::plotdata(csv::read(s.files.front()));
        CHECK(p.header == std::vector<std::string>{"snr_db", "rmse_mcrb", "rmse_aic", "rmse_aicc", "rmse_mdl",
                                                   "bound_min"});
        CHECK(p.rows.size() == 2);
    }
    SUBCASE("empty CSV") {
        CHECK_THROWS_AS(csv::parse(""), SchemaMismatch);
        const csv::Table header_only = csv::parse("sweep_value,m,mean_bound,std_bound\n");
        CHECK_THROWS_AS(csv::plotdata(header_only), SchemaMismatch);
    }
    SUBCASE("ragged rows") {
        CHECK_THROWS_AS(csv::parse("a,b\n1\n"), SchemaMismatch);
    }
    SUBCASE("regenerating is byte-identical") {
        nlohmann::json doc = default_config(ExperimentKind::DoaBound);
        doc["trials"] = 1;
        const ExperimentSummary s = run(doc, scratch("plot-rt"));
        const std::filesystem::path p1 = csv::emit_plotdata(s.files.front());
        const std::string first = slurp(p1);
        CHECK(slurp(csv::emit_plotdata(s.files.front())) == first);
        const csv::Table t = csv::read(p1);
        CHECK(t.header.front() == "m");
    }
    SUBCASE("write and read round trip") {
        csv::Table t;
        t.header = {"x", "y"};
        t.rows = {{csv::format_double(0.1), csv::format_double(1.0 / 3.0)}};
        const std::filesystem::path p = scratch("rt") / "t.csv";
        csv::write(p, t);
        CHECK(csv::to_string(csv::read(p)) == csv::to_string(t));
        CHECK(std::stod(csv::read(p).rows[0][1]) == 1.0 / 3.0);
        CHECK(slurp(p).find('\r') == std::string::npos);
    }
}

TEST_CASE("aggregation") {
    SUBCASE("RMSE does not depend on trial order") {
        std::mt19937_64 gen(7);
        std::normal_distribution<double> nd;
        std::vector<double> sq;
        for (int i = 0; i < 1000; ++i) {
            const double e = nd(gen) * std::pow(10.0, nd(gen));
            sq.push_back(e * e);
        }
        const ErrorStats a = summarize_squared_errors(sq);
        std::shuffle(sq.begin(), sq.end(), gen);
        const ErrorStats b = summarize_squared_errors(sq);
        CHECK(std::abs(a.rmse - b.rmse) <= 1e-12 * a.rmse);
        CHECK(std::abs(a.rmse_se - b.rmse_se) <= 1e-12 * a.rmse_se);
    }
    SUBCASE("known values") {
        const ErrorStats s = summarize_squared_errors({1.0, 4.0, 9.0, 16.0});
        CHECK(s.rmse == doctest::Approx(std::sqrt(7.5)));
    }
    SUBCASE("parallel_for visits every index once") {
        std::vector<std::atomic<int>> hits(257);
        parallel_for(257, 5, [&](int i) { hits[static_cast<std::size_t>(i)]++; });
        for (auto& h : hits) {
            CHECK(h.load() == 1);
        }
    }
}

TEST_CASE("exclusion accounting") {
    nlohmann::json doc = default_config(ExperimentKind::DoaRmseT);
    doc["trials"] = 4;
    doc["sweep"] = {12, 36};
    const ExperimentSummary s = run(doc, scratch("accounting"));
    for (const RmsePoint& p : s.rmse) {
        for (const CriterionStats& c : p.criteria) {
            CHECK(c.trials_ok + p.failures == 4);
        }
    }
    CHECK(s.trials_total == 8);
}
