#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hierwalk/harness.hpp"

namespace hierwalk {

/// Renders the two standard figures from a results CSV:
///   accuracy_vs_walk_len.svg  — one series per variant at the largest k_eval,
///                               mean with a min/max band over runs, plus the
///                               1/2 + L/2n bound line;
///   accuracy_vs_k_eval.svg    — one series per variant at the most frequent
///                               walk length, same aggregation, bound at that
///                               walk length.
/// Returns the written file paths. An empty CSV is a format error and writes
/// nothing.
std::vector<std::filesystem::path> plot_results(const std::string& csv_path,
                                                const std::filesystem::path& out_dir);

}  // namespace hierwalk
