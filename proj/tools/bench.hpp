#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace safemm::bench {

std::vector<std::string> suites();
/// Runs a suite and prints a small report. Returns false for an unknown name.
bool run_suite(const std::string& name, std::ostream& out);

}  // namespace safemm::bench
