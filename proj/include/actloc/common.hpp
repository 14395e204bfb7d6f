#pragma once

// Shared plumbing: error types, deterministic RNG helpers, small utilities.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace actloc {

inline constexpr const char* kVersion = "actloc 0.1.0";

// Bad input data (malformed files, violated preconditions on user data).
// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Command-line misuse. CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal invariant violation. CLI exit code 3.
#define ACTLOC_CHECK(cond, msg)                                      \
  do {                                                               \
    if (!(cond)) throw std::logic_error(std::string("invariant: ") + (msg)); \
  } while (0)

// splitmix64 finalizer; the basis for all seeded noise in the project.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// FNV-1a, for seeds derived from names (stable across platforms, unlike
// std::hash<std::string>).
inline std::uint64_t hash_str(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

// Uniform value in [0, 1) from a hashed key. Stable across platforms.
inline double hash_unit(std::uint64_t key) {
  return double(mix64(key) >> 11) * (1.0 / 9007199254740992.0);  // 53 bits
}

// Draw in [0, n) from a mt19937 stream without std::uniform_int_distribution,
// whose output is implementation-defined.
inline std::uint32_t rng_below(std::mt19937& gen, std::uint32_t n) {
  return std::uint32_t((std::uint64_t(gen()) * n) >> 32);
}

inline double rng_unit(std::mt19937& gen) {
  return double(gen()) * (1.0 / 4294967296.0);
}

// Fisher-Yates with rng_below so shuffles are reproducible everywhere.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng_below(gen, std::uint32_t(i));
    std::swap(v[i - 1], v[j]);
  }
}

// Write-then-rename so partially written outputs are never observed.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + tmp.string());
    out.write(contents.data(), std::streamsize(contents.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

// Shortest decimal form that round-trips the exact double, so text files
// preserve values bit-for-bit.
inline std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

inline double parse_double(const std::string& tok, const std::string& origin) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty())
    throw DataError(origin + ": bad number '" + tok + "'");
  if (!std::isfinite(v))
    throw DataError(origin + ": non-finite number '" + tok + "'");
  return v;
}

inline long parse_int(const std::string& tok, const std::string& origin) {
  char* end = nullptr;
  long v = std::strtol(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || tok.empty())
    throw DataError(origin + ": bad integer '" + tok + "'");
  return v;
}

// Runs fn(i) for i in [0, n). Work items are independent and their outputs
// indexed by i, so results are identical for any job count. The first worker
// exception wins and is rethrown on the caller's thread.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min<int>(jobs, int(n == 0 ? 1 : n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace actloc
