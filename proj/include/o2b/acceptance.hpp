#pragma once

#include <string>

namespace o2b {

// Runs the full acceptance suite, printing one PASS/FAIL line per criterion
// and writing artifacts under out_dir. Returns the number of failed criteria.
int run_acceptance_suite(const std::string& out_dir, int workers);

}  // namespace o2b
