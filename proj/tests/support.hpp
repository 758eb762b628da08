#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "hybridnet/config.hpp"
#include "hybridnet/stance.hpp"
#include "hybridnet/statements.hpp"

namespace testing_support {

inline std::string data_path(const std::string& name) { return std::string(HYBRIDNET_SOURCE_DIR) + "/data/" + name; }

inline const hybridnet::StatementPool& default_pool() {
  static const auto pool = hybridnet::load_pool_file(data_path("pool_red_meat.json"));
  return pool;
}

inline std::shared_ptr<const hybridnet::Lexicon> default_lexicon() {
  static const auto lex =
      std::make_shared<const hybridnet::Lexicon>(hybridnet::Lexicon::load_file(data_path("lexicon_red_meat.json")));
  return lex;
}

inline hybridnet::RunConfig scripted_config(std::uint64_t seed = 1, std::string policy = "majority-copy") {
  hybridnet::RunConfig c;
  c.condition = hybridnet::Condition::ai_only;
  c.ai_backend = hybridnet::AgentKind::scripted;
  c.scripted_policy = std::move(policy);
  c.seed = seed;
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hybridnet-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reference metrics written directly from the definitions, with explicit
// row/col loops and no shared code with the library.

inline double naive_variance(const std::vector<double>& z) {
  long double mean = 0;
  for (double v : z) mean += v;
  mean /= z.size();
  long double acc = 0;
  for (double v : z) acc += (v - mean) * (v - mean);
  return static_cast<double>(acc / z.size());
}

inline std::vector<double> naive_neighbor_average(const std::vector<double>& z, int rows, int cols) {
  std::vector<double> n(z.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      long double sum = 0;
      int k = 0;
      if (r > 0) sum += z[(r - 1) * cols + c], ++k;
      if (r + 1 < rows) sum += z[(r + 1) * cols + c], ++k;
      if (c > 0) sum += z[r * cols + c - 1], ++k;
      if (c + 1 < cols) sum += z[r * cols + c + 1], ++k;
      n[r * cols + c] = static_cast<double>(sum / k);
    }
  }
  return n;
}

inline std::optional<double> naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx < 1e-18L || syy < 1e-18L) return std::nullopt;
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

inline std::optional<double> naive_nci(const std::vector<double>& z, int rows, int cols) {
  return naive_pearson(z, naive_neighbor_average(z, rows, cols));
}

inline std::vector<int> random_opinions(std::mt19937_64& rng, std::size_t n) {
  std::vector<int> z(n);
  for (auto& v : z) v = static_cast<int>(rng() % 3) - 1;
  return z;
}

}  // namespace testing_support

#include "hybridnet/transcript.hpp"
#include "hybridnet/topology.hpp"

namespace testing_support {

/// Replays an event log and counts dispatches of (v, t) that happened before
/// every observation-set slot at t-1 had committed, plus double commits.
inline std::size_t dependency_violations(const std::vector<hybridnet::Event>& events, const hybridnet::GridTopology& g,
                                         int iterations) {
  std::vector<int> commits(g.size() * static_cast<std::size_t>(iterations + 1), 0);
  for (std::size_t i = 0; i < g.size(); ++i) commits[i] = 1;  // iteration 0 is seeded
  auto at = [&](hybridnet::NodeId v, int t) -> int& { return commits[static_cast<std::size_t>(t) * g.size() + g.index(v)]; };
  std::size_t violations = 0;
  for (const auto& e : events) {
    if (!e.slot) continue;
    if (e.type == hybridnet::EventType::dispatched) {
      for (const auto& ref : g.observation_set(e.slot->node)) {
        if (at(ref.node, e.slot->iteration + ref.iteration_offset) == 0) ++violations;
      }
    } else if (e.type == hybridnet::EventType::committed) {
      if (++at(e.slot->node, e.slot->iteration) > 1) ++violations;
    }
  }
  return violations;
}

inline std::size_t commit_count(const std::vector<hybridnet::Event>& events) {
  std::size_t n = 0;
  for (const auto& e : events) n += e.type == hybridnet::EventType::committed;
  return n;
}

}  // namespace testing_support
