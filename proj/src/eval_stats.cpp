#include <cmath>
#include <map>

#include <boost/math/special_functions/beta.hpp>

#include "mvp/eval.hpp"

namespace mvp::eval {

KappaResult cohens_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) throw InvalidArgument("kappa: label vectors differ in length");
  if (a.empty()) throw InvalidArgument("kappa: no labels");
  const double n = static_cast<double>(a.size());
  std::map<std::string, std::pair<std::size_t, std::size_t>> marginals;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) ++agree;
    ++marginals[a[i]].first;
    ++marginals[b[i]].second;
  }
  KappaResult r;
  r.p_o = static_cast<double>(agree) / n;
  for (const auto& [_, counts] : marginals) {
    r.p_e += (static_cast<double>(counts.first) / n) * (static_cast<double>(counts.second) / n);
  }
  if (r.p_e >= 1.0) throw DegenerateDistributionError("kappa undefined: chance agreement is 1");
  r.kappa = (r.p_o - r.p_e) / (1.0 - r.p_e);
  return r;
}

double student_t_two_tailed_p(double t, double df) {
  if (!(df > 0)) throw InvalidArgument("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return boost::math::ibeta(df / 2.0, 0.5, x);
}

TTestResult paired_t_test(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("paired t-test: samples differ in length");
  const std::size_t n = xs.size();
  if (n < 2) throw InvalidArgument("paired t-test needs at least two pairs");
  std::vector<double> d(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = xs[i] - ys[i];
    sum += d[i];
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) throw ZeroVarianceError("paired t-test undefined: differences have zero variance");

  TTestResult r;
  r.mean_difference = mean;
  r.degrees_of_freedom = n - 1;
  r.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p_value = student_t_two_tailed_p(r.t_statistic, static_cast<double>(r.degrees_of_freedom));
  return r;
}

nlohmann::json TTestResult::to_json() const {
  return {{"t_statistic", t_statistic},
          {"degrees_of_freedom", degrees_of_freedom},
          {"p_value", p_value},
          {"mean_difference", mean_difference},
          {"significant", p_value < 0.05}};
}

}  // namespace mvp::eval
