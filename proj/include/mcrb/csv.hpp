#pragma once

// Plain CSV tables with fixed numeric formatting: LF line endings, '.'
// decimal separator and 17 significant digits, so a table written twice from
// the same numbers is byte-identical.

#include <filesystem>
#include <string>
#include <vector>

namespace mcrb::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column; throws SchemaMismatch when absent.
    std::size_t column(const std::string& name) const;
};

std::string format_double(double v);

std::string to_string(const Table& t);
void write(const std::filesystem::path& path, const Table& t);

/// Throws SchemaMismatch on ragged rows and on a file without a header.
Table parse(const std::string& text);
Table read(const std::filesystem::path& path);

/// Reshapes an experiment CSV into one plot-data table (x column followed by
/// one column per series). Values are copied verbatim.
///   doa-rmse     -> <sweep_var>, rmse_mcrb, rmse_aic, rmse_aicc, rmse_mdl, bound_min
///   spectrum-rmse -> T, rmse_mcrb, rmse_aic, rmse_aicc, rmse_mdl, bound_min
///   bounds       -> m, bound_<sweep_value>...
Table plotdata(const Table& experiment_csv);

/// Writes plotdata(read(csv_path)) next to the input as <stem>_plot.csv and
/// returns that path.
std::filesystem::path emit_plotdata(const std::filesystem::path& csv_path);

}  // namespace mcrb::csv
