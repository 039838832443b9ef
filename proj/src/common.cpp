#include "bose/common.hpp"

#include <numeric>
#include <sstream>

namespace bose {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_ >> normal_;
  if (!is) throw ArgumentError("corrupt RNG state");
}

Estimate batch_means(std::span<const double> series, std::size_t n_batches) {
  const std::size_t n = series.size();
  if (n == 0) return {};
  n_batches = std::max<std::size_t>(2, std::min(n_batches, n));
  const std::size_t per = n / n_batches;
  if (per == 0) return {};
  RunningStats batches;
  KahanSum total;
  for (std::size_t b = 0; b < n_batches; ++b) {
    KahanSum s;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += series[i];
    batches.add(s.value() / static_cast<double>(per));
  }
  for (double x : series) total += x;
  return {total.value() / static_cast<double>(n), batches.std_error()};
}

double integrated_autocorrelation_time(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 4) return 0.5;
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (series[i] - mean) * (series[i + lag] - mean);
    return s / static_cast<double>(n - lag);
  };
  const double c0 = autocov(0);
  if (c0 <= 0.0) return 0.5;
  double tau = 0.5;
  for (std::size_t lag = 1; lag < n / 2; ++lag) {
    tau += autocov(lag) / c0;
    if (static_cast<double>(lag) >= 6.0 * tau) break;
  }
  return std::max(tau, 0.5);
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ArgumentError("fit_line needs >= 2 matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ArgumentError("fit_line: degenerate abscissae");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (n > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      ssr += r * r;
    }
    fit.slope_error = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  }
  return fit;
}

}  // namespace bose
