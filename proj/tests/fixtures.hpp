#pragma once

#include <random>
#include <string>
#include <vector>

#include "fairpost/dataset.hpp"

namespace fixture {

// Records r0, r1, ... with a single attribute "g"; membership -1 leaves the
// record unannotated.
inline fairpost::ScoredDataset make(const std::vector<int>& labels, const std::vector<double>& scores,
                                    const std::vector<int>& membership,
                                    const std::string& attribute = "g") {
  std::vector<fairpost::SampleRecord> recs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    fairpost::SampleRecord r;
    r.id = "r" + std::to_string(i);
    r.label = labels[i];
    r.score = scores[i];
    if (membership[i] >= 0) r.groups[attribute] = membership[i];
    recs.push_back(std::move(r));
  }
  return fairpost::ScoredDataset(std::move(recs), {attribute});
}

// Random instance in which every (group, label) cell is non-empty.
struct Random {
  std::vector<int> labels, membership;
  std::vector<double> scores;
};

inline Random random_instance(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Random out;
  for (;;) {
    out = {};
    for (std::size_t i = 0; i < n; ++i) {
      out.labels.push_back(u(rng) < 0.4 ? 1 : 0);
      out.membership.push_back(u(rng) < 0.35 ? 1 : 0);
      // Mildly informative scores.
      const double s = 0.5 * u(rng) + (out.labels.back() ? 0.35 : 0.15);
      out.scores.push_back(s);
    }
    int cells[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < n; ++i) ++cells[out.membership[i]][out.labels[i]];
    if (cells[0][0] && cells[0][1] && cells[1][0] && cells[1][1]) return out;
  }
}

}  // namespace fixture
