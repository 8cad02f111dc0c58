#include "csm/fields/score_field.hpp"

#include <string>

namespace csm {

namespace {

void check_input(const ScoreField& field, std::span<const double> x, const char* where) {
  if (x.size() != field.dim()) {
    throw ContractError(std::string(where) + ": input has " + std::to_string(x.size()) +
                        " components, field has " + std::to_string(field.dim()));
  }
  require_finite(x, where);
}

}  // namespace

std::vector<std::size_t> ScoreField::ordering() const {
  std::vector<std::size_t> order(dim());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  return order;
}

double conditional_score(const ScoreField& field, std::span<const double> x, std::size_t d) {
  check_input(field, x, "conditional_score");
  if (d >= field.dim()) throw std::out_of_range("conditional_score: dimension index out of range");
  std::vector<double> s(field.dim());
  field.scores(x, x, s);
  return s[d];
}

ScoreAll score_all(const ScoreField& field, std::span<const double> x) {
  check_input(field, x, "score_all");
  ScoreAll out{std::vector<double>(field.dim()), std::vector<double>(field.dim())};
  field.scores_with_deriv(x, x, out.score, out.deriv);
  return out;
}

double ood_statistic(const ScoreField& field, std::span<const double> x) {
  check_input(field, x, "ood_statistic");
  std::vector<double> s(field.dim());
  field.scores(x, x, s);
  double h = 0.0;
  for (double v : s) h += v;
  return h;
}

}  // namespace csm
