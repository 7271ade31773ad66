#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "qaf/dataset.hpp"
#include "qaf/model.hpp"
#include "qaf/scenario.hpp"

namespace qaf::test {

/// Small architecture that keeps gradient checks and training loops fast.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.m = 16;
  c.token_size = 4;
  c.d = 4;
  c.p = 5;
  c.s = 3;
  c.fourier_m = 4;
  c.fourier_sigma = 2.0;
  c.branch_hidden = {6};
  c.trunk_hidden = {6};
  c.head_hidden = {5};
  c.t_max_input = 2.0;
  c.horizon = 4.0;
  return c;
}

inline PaddedInput random_input(std::size_t m, std::size_t valid_len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.2);
  PaddedInput in;
  in.values.assign(m, 0.0);
  in.valid_len = valid_len;
  for (std::size_t i = 0; i < valid_len; ++i) in.values[i] = u(rng);
  return in;
}

/// Generator ranges shrunk so datasets fit a tiny model window.
inline GeneratorParams short_generator() {
  GeneratorParams g;
  g.grid_step = 0.02;
  g.horizon = 4.0;
  return g;
}

inline TripletDataset tiny_dataset(std::uint64_t bus, std::size_t n_traj, std::uint64_t seed,
                                   const ModelConfig& mc, std::size_t n_loc = 8,
                                   Split split = Split::train) {
  const GeneratorParams g = short_generator();
  const auto trajs = generate_bus(bus, n_traj, default_bus_bias(bus), g, seed, split);
  AssembleOptions opts{0.1, mc.m, n_loc, mc.t_max_input, seed, split};
  return assemble_triplets(trajs, opts);
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-10) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

/// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("qafdon_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace qaf::test
