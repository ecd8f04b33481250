#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace ctxfuse {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Neumaier-compensated sum; keeps normalization constants tight for
// vocabulary sizes up to a few tens of thousands.
inline double compensated_sum(std::span<const double> xs) {
  double sum = 0.0, comp = 0.0;
  for (double x : xs) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

inline double log_sum_exp(std::span<const double> xs) {
  double mx = kNegInf;
  for (double x : xs) {
    if (x > mx) mx = x;
  }
  if (mx == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) {
    if (x != kNegInf) acc += std::exp(x - mx);
  }
  return mx + std::log(acc);
}

inline std::vector<std::string> split_spaces(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t pos = line.find(' ', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

// Fixed-width formatting so repeated runs emit byte-identical text.
inline std::string format_double(double v, int significant = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", significant, v);
  return buf;
}

// Deterministic bounded draw; std::uniform_int_distribution is not
// portable across standard library implementations.
template <typename Rng>
std::uint64_t bounded_draw(Rng& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

// Uniform double in [0,1) from the top 53 bits of a 64-bit draw.
template <typename Rng>
double unit_draw(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Runs fn(i) for i in [0,n). Each index writes only its own outputs, so
// results are identical for any thread count.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  unsigned want = static_cast<unsigned>(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < want; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace ctxfuse
