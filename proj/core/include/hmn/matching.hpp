#pragma once

// Optimal bipartite assignment between padded ground-truth entity embeddings
// and predicted linguistic embeddings, plus the matched entity loss.

#include <vector>

#include "hmn/tensor.hpp"

namespace hmn {

// Ground-truth entity embeddings padded to a fixed slot count. Padding slots
// are mask=false and carry no embedding semantics (their rows are zero).
struct PaddedEntitySet {
  Tensor embeddings;       // [N, d_s]
  std::vector<bool> mask;  // true = real entity, false = padding

  int slots() const { return static_cast<int>(mask.size()); }
  int real_count() const;
};

// Pads (or truncates, with a logged warning) a list of entity embeddings to
// exactly `slots` rows of width d_s.
PaddedEntitySet pad_entities(const std::vector<Tensor>& entities, int slots, int d_s);

struct Assignment {
  std::vector<int> sigma;  // target slot i pairs with prediction sigma[i]
  double total_cost = 0.0;
};

// Entry (i, j) = cosine distance between real target i and prediction j;
// rows of padding targets are all zero. Built without graph recording —
// the matrix only steers the assignment.
Tensor cost_matrix(const PaddedEntitySet& targets, const Tensor& predictions);

// Minimum-cost perfect matching on a square cost matrix in O(N^3).
// total_cost is recomputed as the sum of selected entries in ascending row
// order, so it is bitwise comparable with a brute-force enumeration.
Assignment hungarian(const Tensor& C);

// L_e = sum over real targets of the cosine distance to their assigned
// prediction. The assignment is held constant for differentiation; gradients
// flow only through the selected distances.
Tensor entity_loss(const PaddedEntitySet& targets, const Tensor& predictions);

}  // namespace hmn
