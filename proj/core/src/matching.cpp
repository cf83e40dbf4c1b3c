#include "hmn/matching.hpp"

#include <cmath>
#include <limits>

#include "hmn/error.hpp"
#include "hmn/log.hpp"

namespace hmn {

namespace {

double row_norm(const Tensor& m, int i) {
  double s = 0.0;
  int cols = m.extent(1);
  const double* p = m.values().data() + static_cast<std::size_t>(i) * cols;
  for (int j = 0; j < cols; ++j) s += p[j] * p[j];
  return std::sqrt(s);
}

}  // namespace

int PaddedEntitySet::real_count() const {
  int m = 0;
  for (bool b : mask) m += b;
  return m;
}

PaddedEntitySet pad_entities(const std::vector<Tensor>& entities, int slots, int d_s) {
  if (slots < 1) throw ValueError("entity slot count must be at least 1");
  int m = static_cast<int>(entities.size());
  if (m > slots) {
    log_message(LogLevel::kInfo, "entity list of size " + std::to_string(m) +
                                     " truncated to " + std::to_string(slots) + " slots");
    m = slots;
  }
  PaddedEntitySet out;
  out.mask.assign(static_cast<std::size_t>(slots), false);
  std::vector<double> data(static_cast<std::size_t>(slots) * d_s, 0.0);
  for (int i = 0; i < m; ++i) {
    const Tensor& e = entities[static_cast<std::size_t>(i)];
    if (e.rank() != 1 || e.extent(0) != d_s) {
      throw ShapeError("entity embedding " + std::to_string(i) + " has shape " +
                       shape_str(e.shape()) + ", expected [" + std::to_string(d_s) + "]");
    }
    for (int j = 0; j < d_s; ++j)
      data[static_cast<std::size_t>(i) * d_s + j] = e.at(j);
    out.mask[static_cast<std::size_t>(i)] = true;
  }
  out.embeddings = Tensor::from({slots, d_s}, std::move(data));
  return out;
}

Tensor cost_matrix(const PaddedEntitySet& targets, const Tensor& predictions) {
  int n = targets.slots();
  if (predictions.rank() != 2 || predictions.extent(0) != n ||
      predictions.extent(1) != targets.embeddings.extent(1)) {
    throw ShapeError("predictions " + shape_str(predictions.shape()) +
                     " do not match targets " + shape_str(targets.embeddings.shape()));
  }
  for (int j = 0; j < n; ++j) {
    if (row_norm(predictions, j) < 1e-12) {
      throw ValueError("prediction row " + std::to_string(j) + " has zero norm");
    }
  }
  NoGradGuard ng;
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (!targets.mask[static_cast<std::size_t>(i)]) continue;
    Tensor ti = row(targets.embeddings, i);
    for (int j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(i) * n + j] =
          cosine_distance(ti, row(predictions, j)).item();
    }
  }
  return Tensor::from({n, n}, std::move(out));
}

Assignment hungarian(const Tensor& C) {
  if (C.rank() != 2 || C.extent(0) != C.extent(1)) {
    throw ShapeError("cost matrix must be square, got " + shape_str(C.shape()));
  }
  int n = C.extent(0);
  for (double x : C.values()) {
    if (!std::isfinite(x)) throw ValueError("cost matrix has a non-finite entry");
  }
  const double kInf = std::numeric_limits<double>::infinity();
  const double* cost = C.values().data();
  auto at = [cost, n](int i, int j) { return cost[static_cast<std::size_t>(i) * n + j]; };

  // potentials method, 1-indexed with a virtual 0 row/column
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      int i0 = p[static_cast<std::size_t>(j0)], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = at(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                     v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  Assignment out;
  out.sigma.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    out.sigma[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  // recompute in ascending row order for bit-exact comparability
  out.total_cost = 0.0;
  for (int i = 0; i < n; ++i) out.total_cost += at(i, out.sigma[static_cast<std::size_t>(i)]);
  return out;
}

Tensor entity_loss(const PaddedEntitySet& targets, const Tensor& predictions) {
  Assignment a = hungarian(cost_matrix(targets, predictions));
  int n = targets.slots();
  Tensor loss = Tensor::scalar(0.0);
  for (int i = 0; i < n; ++i) {
    if (!targets.mask[static_cast<std::size_t>(i)]) continue;
    Tensor ti = row(targets.embeddings, i);
    Tensor pj = row(predictions, a.sigma[static_cast<std::size_t>(i)]);
    loss = add(loss, cosine_distance(ti, pj));
  }
  return loss;
}

}  // namespace hmn
