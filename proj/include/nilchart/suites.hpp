#pragma once

// Property sweeps over fields: the torsion identities, kernel brackets, and
// involutivity of images and kernel-image sums.

#include <algorithm>
#include <string>
#include <vector>

#include "nilchart/corpus.hpp"
#include "nilchart/field.hpp"
#include "nilchart/structure.hpp"

namespace nilchart {

struct SweepResult {
  double value = 0.0;
  std::string where;  // which member of the sweep attained the max
  Vec point;
  int members = 0;
};

/// Max of both torsion identity residuals over 1 <= p, q <= max_power.
inline SweepResult torsion_identity_sweep(const EndoField& a, const Box& box, int samples, std::uint64_t seed,
                                          int max_power = 3) {
  SweepResult out;
  for (int p = 1; p <= max_power; ++p)
    for (int q = 1; q <= max_power; ++q) {
      Prop22Residual r = prop22_residual(a, p, q, box, samples, seed);
      ++out.members;
      if (r.identity_i > out.value) {
        out.value = r.identity_i;
        out.where = "(i) p=" + std::to_string(p) + " q=" + std::to_string(q);
        out.point = r.where_i;
      }
      if (r.identity_ii > out.value) {
        out.value = r.identity_ii;
        out.where = "(ii) p=" + std::to_string(p) + " q=" + std::to_string(q);
        out.point = r.where_ii;
      }
    }
  return out;
}

/// For fields in ker A^p, A^{2p}[X, Y] over kernel-frame pairs, p = 1..n-1.
inline SweepResult kernel_bracket_sweep(const EndoField& a, const Box& box, int samples, std::uint64_t seed,
                                        RankOptions opt = {}) {
  SweepResult out;
  const int n = nilpotency_index(a, box, opt);
  auto pts = sample_points(box, samples, seed);
  FrameOptions fo{samples, seed, opt};
  for (int p = 1; p < n; ++p) {
    Distribution k = kernel_frame(a, p, box, fo);
    EndoField a2p = endo_power(a, 2 * p);
    std::vector<VectorField> fs;
    for (std::size_t i = 0; i < k.frame.size(); ++i)
      for (std::size_t j = i + 1; j < k.frame.size(); ++j) fs.push_back(a2p * lie_bracket(k.frame[i], k.frame[j]));
    ++out.members;
    if (fs.empty()) continue;
    MaxResidual m = max_norm_on_samples(fs, pts);
    if (m.value > out.value) {
      out.value = m.value;
      out.where = "p=" + std::to_string(p);
      out.point = m.where;
    }
  }
  return out;
}

/// Involutivity residuals of all Im A^p and, if sums is set, of all
/// ker A^p + Im A^q, p, q = 1..n-1.
inline SweepResult image_involutivity_sweep(const EndoField& a, const Box& box, int samples, std::uint64_t seed,
                                            RankOptions opt = {}, bool sums = true) {
  SweepResult out;
  const int n = nilpotency_index(a, box, opt);
  FrameOptions fo{samples, seed, opt};
  auto take = [&](const Distribution& d, const std::string& name) {
    InvolutivityResult r = involutivity_residual(d, box, samples, seed);
    ++out.members;
    if (r.max_residual > out.value) {
      out.value = r.max_residual;
      out.where = name;
      out.point = r.where;
    }
  };
  for (int p = 1; p < n; ++p) take(image_frame(a, p, box, fo), "Im A^" + std::to_string(p));
  if (!sums) return out;
  for (int p = 1; p < n; ++p)
    for (int q = 1; q < n; ++q)
      take(sum_distribution(kernel_frame(a, p, box, fo), image_frame(a, q, box, fo), fo),
           "ker A^" + std::to_string(p) + " + Im A^" + std::to_string(q));
  return out;
}

/// Corpus entries whose field is nilpotent.
inline std::vector<CorpusEntry> nilpotent_corpus() {
  std::vector<CorpusEntry> out;
  for (const auto& name : corpus_names()) {
    CorpusEntry e = corpus_entry(name);
    if (e.factors.empty()) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace nilchart
