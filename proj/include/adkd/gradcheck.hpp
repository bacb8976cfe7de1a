#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "adkd/graph.hpp"
#include "adkd/tensor.hpp"

// Finite-difference validation of every backward implementation. A case owns
// its leaf tensors and a builder that assembles the computation on a fresh
// graph, entering each leaf via g.param(...) and returning a scalar node.
// The analytic pass runs the builder once and calls backward(); the numeric
// pass re-runs the builder with one element nudged by ±step and compares the
// central difference against the analytic entry.

namespace adkd {

struct GradCase {
  std::string name;
  std::map<std::string, Tensor<double>> params;
  // Must be a pure function of the tensor map it receives.
  std::function<NodeRef(Graph<double>&, const std::map<std::string, Tensor<double>>&)> build;
};

struct GradResult {
  std::string name;
  double max_rel_err = 0;
  std::size_t elements = 0;
  bool pass = false;
};

// |a - b| / max(1, |a|, |b|)
double gradient_rel_err(double a, double b);

GradResult run_grad_case(const GradCase& c, double step = 1e-5, double tol = 1e-6);

// Every differentiable graph op, both attention blocks, each distillation
// loss in both tensor ranks, and an attention-refined loss composition.
std::vector<GradCase> standard_grad_cases();

// Runs the whole suite, one line per case; returns the number of failures.
int run_grad_suite(std::ostream& log, double step = 1e-5, double tol = 1e-6);

}  // namespace adkd
