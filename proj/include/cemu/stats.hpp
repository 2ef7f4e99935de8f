#pragma once

#include <cstddef>
#include <vector>

namespace cemu {

double mean(const std::vector<double>& xs);

// Sample standard deviation (n-1 denominator); 0 for fewer than 2 samples.
double sample_stddev(const std::vector<double>& xs);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
};

// Ordinary least squares over (x, y) pairs; requires >= 2 distinct x.
LinearFit least_squares(const std::vector<double>& xs,
                        const std::vector<double>& ys);

// Process CPU time (user+system) in microseconds, for CPU-share reporting.
int64_t process_cpu_time_us();

}  // namespace cemu
