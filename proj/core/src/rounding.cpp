#include "qswitch/rounding.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "qswitch/error.hpp"

namespace qswitch {

namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double l1_distance(const RVector& a, const RVector& b) { return (a - b).cwiseAbs().sum(); }

void check_fs(const ControlGrid& grid, const FeasibleSet& fs) {
  if (grid.n_ctrl() != fs.n_ctrl()) {
    std::ostringstream msg;
    msg << "grid has " << grid.n_ctrl() << " controllers, feasible set has " << fs.n_ctrl();
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
  if (grid.n_steps() < 1) throw Error(ErrorCode::DimensionMismatch, "grid has no steps");
}

// suffix[k] = TV of rows k..T-1 of the grid.
std::vector<double> suffix_tv(const ControlGrid& grid) {
  const int T = grid.n_steps();
  std::vector<double> out(static_cast<std::size_t>(T) + 1, 0.0);
  for (int k = T - 2; k >= 0; --k) {
    out[static_cast<std::size_t>(k)] =
        out[static_cast<std::size_t>(k) + 1] + l1_distance(grid.step(k), grid.step(k + 1));
  }
  return out;
}

// TV of [prefix (ending in prev), candidate at k, continuous rows k+1..].
struct SpliceTv {
  const ControlGrid& u_con;
  std::vector<double> tail;

  double operator()(double prefix_tv, const RVector* prev, const RVector& cand, int k) const {
    double tv = prefix_tv;
    if (prev != nullptr) tv += l1_distance(*prev, cand);
    if (k + 1 < u_con.n_steps()) {
      tv += l1_distance(cand, u_con.step(k + 1)) + tail[static_cast<std::size_t>(k) + 1];
    }
    return tv;
  }
};

}  // namespace

FeasibleSet::FeasibleSet(FeasibleKind kind, int n_ctrl, std::size_t cap)
    : kind_(kind), n_ctrl_(n_ctrl) {
  if (n_ctrl < 1) throw Error(ErrorCode::InvalidArgument, "feasible set needs >= 1 controller");
  if (kind == FeasibleKind::Sos1) {
    if (static_cast<std::size_t>(n_ctrl) > cap) {
      throw Error(ErrorCode::UnsupportedFeasibleSet, "SOS1 candidate count exceeds the cap");
    }
    for (int j = n_ctrl - 1; j >= 0; --j) {
      RVector u = RVector::Zero(n_ctrl);
      u(j) = 1.0;
      candidates_.push_back(u);
    }
    return;
  }
  if (n_ctrl > 16 || (std::size_t{1} << n_ctrl) > cap) {
    std::ostringstream msg;
    msg << "free binary enumeration of 2^" << n_ctrl << " candidates exceeds the cap (N <= 16)";
    throw Error(ErrorCode::UnsupportedFeasibleSet, msg.str());
  }
  const std::size_t count = std::size_t{1} << n_ctrl;
  for (std::size_t m = 0; m < count; ++m) {
    RVector u(n_ctrl);
    // Controller 1 is the most significant bit, which yields lexicographic order.
    for (int j = 0; j < n_ctrl; ++j) u(j) = static_cast<double>((m >> (n_ctrl - 1 - j)) & 1U);
    candidates_.push_back(u);
  }
}

FeasibleSet FeasibleSet::for_system(const ControlSystem& sys) {
  return FeasibleSet(sys.feasible, sys.n_ctrl());
}

std::size_t FeasibleSet::index_of(const RVector& u) const {
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (candidates_[i] == u) return i;
  }
  return candidates_.size();
}

double tv_norm(const ControlGrid& grid) {
  double tv = 0.0;
  for (int k = 0; k + 1 < grid.n_steps(); ++k) tv += l1_distance(grid.step(k), grid.step(k + 1));
  return tv;
}

std::vector<CMatrix> mu_propagators(const ControlSystem& sys, const ControlGrid& u_con) {
  const int T = u_con.n_steps();
  if (u_con.n_ctrl() != sys.n_ctrl()) {
    throw Error(ErrorCode::DimensionMismatch, "grid controller count differs from system");
  }
  std::vector<CMatrix> mu(static_cast<std::size_t>(T) + 1);
  mu[static_cast<std::size_t>(T)] = CMatrix::Identity(sys.dim, sys.dim);
  for (int k = T - 1; k >= 0; --k) {
    mu[static_cast<std::size_t>(k)] = counted_product(
        mu[static_cast<std::size_t>(k) + 1], expm_skew(sys.hamiltonian(u_con.step(k)), u_con.dt));
  }
  return mu;
}

double spliced_objective(const ObjectiveSpec& spec, const CMatrix& mu_next,
                         const CMatrix& step_propagator, const CMatrix& x_prev) {
  return objective(spec, counted_product(counted_product(mu_next, step_propagator), x_prev));
}

std::string to_string(ObjRule rule) { return rule == ObjRule::Verbatim ? "verbatim" : "delta"; }

ObjRule obj_rule_from_string(const std::string& name) {
  if (name == "verbatim") return ObjRule::Verbatim;
  if (name == "delta") return ObjRule::Delta;
  throw Error(ErrorCode::InvalidArgument,
              "unknown obj_rule '" + name + "' (expected verbatim or delta)");
}

ControlGrid round_obj(const ControlSystem& sys, const ObjectiveSpec& spec,
                      const ControlGrid& u_con, double alpha, const FeasibleSet& fs,
                      ObjRule rule) {
  check_fs(u_con, fs);
  if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be non-negative");
  const int T = u_con.n_steps();
  const auto& cands = fs.candidates();
  const std::size_t n_cand = cands.size();

  const std::vector<CMatrix> mu = mu_propagators(sys, u_con);
  std::vector<CMatrix> cand_props;
  cand_props.reserve(n_cand);
  for (const RVector& c : cands) cand_props.push_back(expm_skew(sys.hamiltonian(c), u_con.dt));

  const SpliceTv splice{u_con, suffix_tv(u_con)};

  ControlGrid out = u_con;
  out.binary = true;
  CMatrix x_prev = sys.x_init;
  double prefix_tv = 0.0;
  std::size_t prev = n_cand;
  std::vector<double> f(n_cand), tv(n_cand);

  for (int k = 0; k < T; ++k) {
    const RVector* prev_u = (k > 0) ? &cands[prev] : nullptr;
    for (std::size_t c = 0; c < n_cand; ++c) {
      f[c] = spliced_objective(spec, mu[static_cast<std::size_t>(k) + 1], cand_props[c], x_prev);
      tv[c] = splice(prefix_tv, prev_u, cands[c], k);
    }
    std::size_t best = 0;
    auto rank = [&](std::size_t c) { return std::make_tuple(f[c], tv[c], c == prev ? 0 : 1, c); };
    for (std::size_t c = 1; c < n_cand; ++c) {
      if (rank(c) < rank(best)) best = c;
    }

    std::size_t choice = best;
    if (k > 0 && best != prev) {
      const bool keep = rule == ObjRule::Verbatim
                            ? f[prev] <= alpha * tv[best]
                            : f[prev] <= f[best] + alpha * (tv[best] - tv[prev]);
      if (keep) choice = prev;
    }

    out.values.row(k) = cands[choice].transpose();
    if (k > 0) prefix_tv += l1_distance(cands[prev], cands[choice]);
    x_prev = counted_product(cand_props[choice], x_prev);
    prev = choice;
  }
  return out;
}

ControlGrid round_cdiff(const ControlGrid& u_con, double beta, const FeasibleSet& fs) {
  check_fs(u_con, fs);
  if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be non-negative");
  const int T = u_con.n_steps();
  const int N = u_con.n_ctrl();
  const double dt = u_con.dt;

  std::vector<CompensatedSum> p(static_cast<std::size_t>(N));
  RVector p_hat(N);

  auto pick = [&]() {
    RVector u = RVector::Zero(N);
    if (fs.kind() == FeasibleKind::Sos1) {
      Eigen::Index j_star = 0;
      for (Eigen::Index j = 1; j < N; ++j) {
        if (p_hat(j) > p_hat(j_star)) j_star = j;
      }
      u(j_star) = 1.0;
    } else {
      for (Eigen::Index j = 0; j < N; ++j) u(j) = p_hat(j) >= 0.5 * dt ? 1.0 : 0.0;
    }
    return u;
  };
  auto diff = [&](const RVector& u) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      d = std::max(d, u(j) == 1.0 ? std::abs(p_hat(j) - dt) : std::abs(p_hat(j)));
    }
    return d;
  };

  const SpliceTv splice{u_con, suffix_tv(u_con)};
  ControlGrid out = u_con;
  out.binary = true;
  RVector prev;
  double prefix_tv = 0.0;

  for (int k = 0; k < T; ++k) {
    for (int j = 0; j < N; ++j) {
      auto& acc = p[static_cast<std::size_t>(j)];
      acc.add(u_con.values(k, j) * dt);
      if (k > 0) acc.add(-prev(j) * dt);
      p_hat(j) = acc.value();
    }
    RVector choice = pick();
    if (k > 0 && choice != prev) {
      if (diff(prev) <= beta * splice(prefix_tv, &prev, choice, k)) choice = prev;
    }
    out.values.row(k) = choice.transpose();
    if (k > 0) prefix_tv += l1_distance(prev, choice);
    prev = choice;
  }
  return out;
}

RMatrix cumulative_deviation(const ControlGrid& u_con, const ControlGrid& u_bin) {
  if (u_con.values.rows() != u_bin.values.rows() || u_con.values.cols() != u_bin.values.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "continuous and binary grids differ in shape");
  }
  const int T = u_con.n_steps();
  const int N = u_con.n_ctrl();
  RMatrix out(T, N);
  for (int j = 0; j < N; ++j) {
    CompensatedSum acc;
    for (int k = 0; k < T; ++k) {
      acc.add(u_con.values(k, j) * u_con.dt);
      if (k > 0) acc.add(-u_bin.values(k - 1, j) * u_con.dt);
      out(k, j) = acc.value();
    }
  }
  return out;
}

void ControllerSequence::validate() const {
  if (hams.empty()) throw Error(ErrorCode::InvalidArgument, "controller sequence is empty");
  if (durations.size() != hams.size() || control_vectors.size() != hams.size()) {
    throw Error(ErrorCode::DimensionMismatch, "controller sequence fields differ in length");
  }
  double total = 0.0;
  for (double tau : durations) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
      throw Error(ErrorCode::InvalidArgument, "sequence durations must be finite and >= 0");
    }
    total += tau;
  }
  if (!(std::abs(total - t_f) <= 1e-9 * std::max(1.0, t_f))) {
    std::ostringstream msg;
    msg << "sequence durations sum to " << total << ", expected t_f = " << t_f;
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
}

ControllerSequence extract_sequence(const ControlSystem& sys, const ControlGrid& u_bin) {
  if (u_bin.n_ctrl() != sys.n_ctrl()) {
    throw Error(ErrorCode::DimensionMismatch, "grid controller count differs from system");
  }
  if (u_bin.n_steps() < 1) throw Error(ErrorCode::DimensionMismatch, "grid has no steps");
  ControllerSequence seq;
  seq.x_init = sys.x_init;
  seq.t_f = u_bin.t_f();
  int run = 0;
  for (int k = 0; k < u_bin.n_steps(); ++k) {
    const RVector u = u_bin.step(k);
    if (k > 0 && u != seq.control_vectors.back()) {
      seq.durations.push_back(run * u_bin.dt);
      run = 0;
    }
    if (run == 0) {
      seq.control_vectors.push_back(u);
      seq.hams.push_back(sys.hamiltonian(u));
    }
    ++run;
  }
  seq.durations.push_back(run * u_bin.dt);
  return seq;
}

double sequence_tv(const std::vector<RVector>& control_vectors) {
  double tv = 0.0;
  for (std::size_t s = 1; s < control_vectors.size(); ++s) {
    tv += l1_distance(control_vectors[s - 1], control_vectors[s]);
  }
  return tv;
}

}  // namespace qswitch
