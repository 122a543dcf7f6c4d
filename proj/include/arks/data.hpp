#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "arks/models.hpp"
#include "arks/tensor.hpp"

namespace arks {

// Header row, then one sample per row with the target in the last column.
// Ragged rows, non-numeric cells and files without data rows raise
// ParseError carrying the 1-based line number.
std::vector<Sample> load_csv(const std::filesystem::path& path);
std::vector<Sample> parse_csv(const std::string& text);

// Writes a header (x0..x{d-1}, y) and rows at full double precision.
void save_csv(const std::filesystem::path& path, const std::vector<Sample>& data);
std::string format_csv(const std::vector<Sample>& data);

// Per-feature mean/scale estimated on one split and applied to any other.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const std::vector<Sample>& train);
  std::vector<Sample> apply(const std::vector<Sample>& data) const;
};

enum class SyntheticKind { two_moons, linear_regression, rls };

std::string to_string(SyntheticKind k);
SyntheticKind parse_synthetic_kind(const std::string& s);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::two_moons;
  std::size_t n_train = 100;
  std::size_t n_test = 100;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::size_t dim = 2;       // features for linear-regression
  std::size_t rls_rows = 4;  // A0, A1 are rls_rows x dim for rls
  double rls_a1_scale = 1.0;

  void validate() const;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Two interleaved half circles, classes 0 and 1, with Gaussian jitter.
std::vector<Sample> make_two_moons(std::size_t n, double noise, std::uint64_t seed);
// x ~ N(0, I), y = w^T x + noise * N(0, 1) with a seeded w.
std::vector<Sample> make_linear_regression(std::size_t n, std::size_t dim, double noise, std::uint64_t seed);
// A0, A1, b with standard normal entries (A1 scaled by a1_scale).
RlsProblem make_rls_problem(std::size_t rows, std::size_t cols, double a1_scale, std::uint64_t seed);
// xi ~ Uniform(-1, 1)
std::vector<double> sample_xi(std::size_t n, std::uint64_t seed);

Dataset make_dataset(const SyntheticSpec& spec);

}  // namespace arks
