#pragma once

// Exact integer reference for Jordan partitions of nilpotent matrices.

#include <cstdint>
#include <utility>
#include <vector>

#include "nilchart/box.hpp"

namespace testing_support {

// Exact rank of an integer matrix by fraction-free (Bareiss) elimination.
inline int exact_rank(std::vector<std::vector<__int128>> m) {
  const int rows = static_cast<int>(m.size()), cols = rows ? static_cast<int>(m[0].size()) : 0;
  int rank = 0;
  __int128 prev = 1;
  for (int c = 0; c < cols && rank < rows; ++c) {
    int piv = -1;
    for (int r = rank; r < rows; ++r)
      if (m[r][c] != 0) {
        piv = r;
        break;
      }
    if (piv < 0) continue;
    std::swap(m[piv], m[rank]);
    for (int r = rank + 1; r < rows; ++r) {
      for (int k = c + 1; k < cols; ++k) m[r][k] = (m[rank][c] * m[r][k] - m[r][c] * m[rank][k]) / prev;
      m[r][c] = 0;
    }
    prev = m[rank][c];
    ++rank;
  }
  return rank;
}

using IMat = std::vector<std::vector<__int128>>;
inline IMat imul(const IMat& a, const IMat& b) {
  const std::size_t n = a.size();
  IMat r(n, std::vector<__int128>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      if (a[i][k] != 0)
        for (std::size_t j = 0; j < n; ++j) r[i][j] += a[i][k] * b[k][j];
  return r;
}

// Partition from exact kernel dimensions of powers: blocks of size >= k
// number dim ker N^k - dim ker N^{k-1}.
inline std::vector<int> brute_force_partition(const IMat& n) {
  const int d = static_cast<int>(n.size());
  std::vector<int> ker{0};
  IMat p = n;
  for (int k = 1; k <= d; ++k) {
    ker.push_back(d - exact_rank(p));
    p = imul(p, n);
  }
  std::vector<int> at_least(d + 2, 0);
  for (int k = 1; k <= d; ++k) at_least[k] = ker[k] - ker[k - 1];
  std::vector<int> parts;
  for (int k = d; k >= 1; --k)
    for (int c = 0; c < at_least[k] - at_least[k + 1]; ++c) parts.push_back(k);
  return parts;
}

/// S J S^-1 for a random partition of d, with S unimodular; also the blocks.
inline std::pair<IMat, std::vector<int>> random_conjugated_nilpotent(nilchart::SampleRng& rng, int d) {
  // random partition of d into Jordan blocks
  std::vector<int> blocks;
  int left = d;
  while (left > 0) {
    int b = 1 + static_cast<int>(rng.next() % left);
    blocks.push_back(b);
    left -= b;
  }
  IMat j(d, std::vector<__int128>(d, 0));
  int off = 0;
  for (int b : blocks) {
    for (int i = 0; i + 1 < b; ++i) j[off + i][off + i + 1] = 1;
    off += b;
  }
  // unimodular S and its exact inverse from elementary row operations
  IMat s(d, std::vector<__int128>(d, 0)), si = s;
  for (int i = 0; i < d; ++i) s[i][i] = si[i][i] = 1;
  for (int op = 0; op < 3 * d; ++op) {
    int r = static_cast<int>(rng.next() % d), c = static_cast<int>(rng.next() % d);
    if (r == c) continue;
    int f = static_cast<int>(rng.next() % 5) - 2;
    for (int k = 0; k < d; ++k) s[r][k] += f * s[c][k];     // S <- E S
    for (int k = 0; k < d; ++k) si[k][c] -= f * si[k][r];   // S^-1 <- S^-1 E^-1
  }
  return {imul(imul(s, j), si), blocks};
}

}  // namespace testing_support
