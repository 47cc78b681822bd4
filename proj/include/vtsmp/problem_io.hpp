#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vtsmp/problem.hpp"

namespace vtsmp {

/// Names accepted by `registry_problem`.
std::vector<std::string> registry_names();

/// Built-in problems: example1, example2, lq-linear, nonlinear-test and the
/// two-dimensional oscillator-2d.
ProblemDefinition registry_problem(std::string_view name);

/// Parses the INI-style problem file format:
///
///   [problem]       m, d, k, T, alpha, x0, seed
///   [coefficients]  b, sigma, f, g, phi
///   [control]       kind (finite|box), points | lower + upper, candidate
///
/// Vectors are comma separated. For k > 1, finite points are separated by ';'.
/// Unknown sections or keys are rejected.
ProblemDefinition parse_problem_text(std::string_view text);

/// Registry name, or a path to a problem file.
ProblemSpec load_problem(const std::string& source);

}  // namespace vtsmp
