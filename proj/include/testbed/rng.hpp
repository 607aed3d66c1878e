#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include "testbed/common.hpp"

namespace testbed::rng {

using Engine = std::mt19937_64;

/// Finalizer from the splitmix64 generator; a good 64-bit mixing function.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent child seed from a base seed and a path of indices.
/// Used to split one master seed into per-(problem, sample, purpose) streams
/// so any sub-draw is reproducible in isolation.
inline std::uint64_t derive(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p));
  return s;
}

/// FNV-1a hash of a string, used to turn stream tags and agent ids into
/// seed-path components.
inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Engine make_engine(std::uint64_t seed) { return Engine(splitmix64(seed)); }

inline double std_normal(Engine& eng) {
  std::normal_distribution<double> dist;
  return dist(eng);
}

/// Fills row-major (row by row); the fill order is part of the contract for
/// reproducing hyperplane draws outside this module.
inline Matrix gaussian_matrix(int rows, int cols, Engine& eng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = dist(eng);
  return out;
}

inline Vector gaussian_vector(int n, Engine& eng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Vector out(n);
  for (int i = 0; i < n; ++i) out(i) = dist(eng);
  return out;
}

}  // namespace testbed::rng
