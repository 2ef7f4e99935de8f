#include "cemu/stats.hpp"

#include <sys/resource.h>

#include <cmath>
#include <stdexcept>

namespace cemu {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0;
  double sum = 0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0;
  const double m = mean(xs);
  double acc = 0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

LinearFit least_squares(const std::vector<double>& xs,
                        const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("least_squares: need >= 2 paired samples");
  }
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0;
  double sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0) {
    throw std::invalid_argument("least_squares: need >= 2 distinct x values");
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

int64_t process_cpu_time_us() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  auto tv_us = [](const timeval& tv) {
    return static_cast<int64_t>(tv.tv_sec) * 1000000 + tv.tv_usec;
  };
  return tv_us(ru.ru_utime) + tv_us(ru.ru_stime);
}

}  // namespace cemu
