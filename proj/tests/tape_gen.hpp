#pragma once

// Random expression generator shared by the gradient property tests and the
// acceptance suite.

#include <cmath>
#include <cstdint>
#include <vector>

#include "arks/random.hpp"
#include "arks/tape.hpp"

namespace arks::testing {

struct RandomTape {
  Tape tape;
  std::vector<NodeId> params;
  std::vector<NodeId> terms;  // scalar terms whose sum is the output
  Bindings bindings;
};

inline double away_from_zero(Rng& rng) {
  const double mag = rng.uniform(0.2, 1.5);
  return rng.uniform() < 0.5 ? -mag : mag;
}

inline Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(shape);
  for (auto& v : t.data()) v = away_from_zero(rng);
  return t;
}

// Builds sum of three random scalar terms over leaves p, q (length 4) and
// M (3x4), covering every primitive across seeds.
inline RandomTape make_random_tape(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 77));
  RandomTape rt;
  Tape& t = rt.tape;
  const NodeId p = t.parameter("p", Shape{4});
  const NodeId q = t.parameter("q", Shape{4});
  const NodeId m = t.parameter("M", Shape{3, 4});
  const NodeId label = t.input("label", Shape{});
  rt.params = {p, q, m};
  rt.bindings.set(p, random_tensor(rng, Shape{4}));
  rt.bindings.set(q, random_tensor(rng, Shape{4}));
  rt.bindings.set(m, random_tensor(rng, Shape{3, 4}));
  rt.bindings.set(label, Tensor::scalar(static_cast<double>(rng.below(3))));

  for (int term = 0; term < 3; ++term) {
    NodeId v{};
    switch (rng.below(5)) {
      case 0: v = t.matmul(m, p); break;
      case 1: v = t.mul(p, q); break;
      case 2: v = t.sub(p, q); break;
      case 3: v = t.add(p, t.constant(rng.uniform(-1.0, 1.0))); break;
      default: v = t.matmul(m, t.add(p, q)); break;
    }
    const int unaries = 1 + static_cast<int>(rng.below(2));
    for (int k = 0; k < unaries; ++k) {
      switch (rng.below(5)) {
        case 0: v = t.elu(v); break;
        case 1: v = t.relu(t.add(v, t.constant(0.05))); break;
        case 2: v = t.neg(v); break;
        case 3: v = t.exp(t.mul(v, t.constant(0.3))); break;
        default: v = t.mul(t.constant(rng.uniform(0.5, 2.0)), v); break;
      }
    }
    NodeId s{};
    const std::size_t width = t.node(v).shape.at(0);
    switch (rng.below(6)) {
      case 0: s = t.sum(v); break;
      case 1: s = t.mean(v); break;
      case 2: s = t.sq_norm(v); break;
      case 3: s = t.l1_norm(v); break;
      case 4:
        s = width == 3 ? t.softmax_xent(v, label) : t.softmax_xent(v, t.constant(1.0));
        break;
      default: s = t.log(t.add(t.sq_norm(v), t.constant(1.0))); break;
    }
    rt.terms.push_back(s);
  }
  t.set_output(t.add(rt.terms[0], t.add(rt.terms[1], rt.terms[2])));
  return rt;
}

// Flattened parameter values of a random tape, in params order.
inline Vector flatten(const RandomTape& rt) {
  Vector out;
  for (NodeId id : rt.params) {
    const Tensor* v = rt.bindings.find(id);
    out.insert(out.end(), v->values().begin(), v->values().end());
  }
  return out;
}

inline Bindings unflatten(const RandomTape& rt, std::span<const double> flat) {
  Bindings b = rt.bindings;
  std::size_t off = 0;
  for (NodeId id : rt.params) {
    const Shape& s = rt.tape.node(id).shape;
    const std::size_t n = shape_size(s);
    b.set(id, Tensor(s, Vector(flat.begin() + static_cast<std::ptrdiff_t>(off),
                                flat.begin() + static_cast<std::ptrdiff_t>(off + n))));
    off += n;
  }
  return b;
}

// ||a - b|| / max(||b||, floor)
inline double rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

}  // namespace arks::testing
