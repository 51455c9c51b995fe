#pragma once

// Analytic identities that must hold to near machine precision. Cheap enough
// to run from the command line.

#include <string>
#include <vector>

namespace mcrb {

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

std::vector<SelftestCheck> run_selftest();

}  // namespace mcrb
