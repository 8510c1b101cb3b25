#include "qswitch/sto.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "qswitch/error.hpp"

namespace qswitch {

void SwitchingSchedule::validate() {
  if (durations.empty()) throw Error(ErrorCode::InvalidArgument, "schedule has no intervals");
  double total = 0.0;
  for (double& tau : durations) {
    if (!std::isfinite(tau) || tau < -1e-12) {
      std::ostringstream msg;
      msg << "interval length " << tau << " is negative or not finite";
      throw Error(ErrorCode::InvalidArgument, msg.str());
    }
    if (tau < 0.0) tau = 0.0;
    total += tau;
  }
  if (!(std::abs(total - t_f) <= 1e-9 * std::max(1.0, t_f))) {
    std::ostringstream msg;
    msg << "interval lengths sum to " << total << ", expected " << t_f;
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
}

SwitchingSchedule initial_schedule(const ControllerSequence& seq) {
  return SwitchingSchedule{seq.durations, seq.t_f};
}

namespace {

std::vector<std::int64_t> fingerprint(const CMatrix& h) {
  std::vector<std::int64_t> key;
  key.reserve(static_cast<std::size_t>(2 * h.size() + 1));
  key.push_back(h.rows());
  for (Eigen::Index j = 0; j < h.cols(); ++j) {
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      key.push_back(std::llround(h(i, j).real() * 1e9));
      key.push_back(std::llround(h(i, j).imag() * 1e9));
    }
  }
  return key;
}

void check_lengths(const ControllerSequence& seq, const SwitchingSchedule& sched) {
  if (seq.hams.empty()) throw Error(ErrorCode::InvalidArgument, "controller sequence is empty");
  if (sched.durations.size() != seq.hams.size()) {
    std::ostringstream msg;
    msg << "schedule has " << sched.durations.size() << " intervals, sequence has "
        << seq.hams.size();
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
}

}  // namespace

std::shared_ptr<const HermitianEig> EigCache::lookup(const CMatrix& h) {
  if (!enabled_) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++decompositions_;
    }
    return std::make_shared<const HermitianEig>(hermitian_eig(h));
  }
  auto key = fingerprint(h);
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second;
  auto eig = std::make_shared<const HermitianEig>(hermitian_eig(h));
  ++decompositions_;
  entries_.emplace(std::move(key), eig);
  return eig;
}

CMatrix EigCache::propagator(const CMatrix& h, double tau) {
  if (!enabled_) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++decompositions_;
    }
    return expm_skew(h, tau);
  }
  return expm_from_eig(*lookup(h), tau);
}

std::size_t EigCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

std::uint64_t EigCache::decompositions() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return decompositions_;
}

CMatrix final_operator(const ControllerSequence& seq, const SwitchingSchedule& sched,
                       EigCache& cache) {
  check_lengths(seq, sched);
  CMatrix x = seq.x_init;
  for (std::size_t s = 0; s < seq.hams.size(); ++s) {
    x = counted_product(cache.propagator(seq.hams[s], sched.durations[s]), x);
  }
  return x;
}

StoEvaluation evaluate_sto(const ControllerSequence& seq, const SwitchingSchedule& sched,
                           const ObjectiveSpec& spec, EigCache& cache, bool with_gradient) {
  check_lengths(seq, sched);
  const std::size_t S = seq.hams.size();
  StoEvaluation out;

  std::vector<CMatrix> props;
  props.reserve(S);
  for (std::size_t s = 0; s < S; ++s) props.push_back(cache.propagator(seq.hams[s], sched.durations[s]));

  if (const auto* e = std::get_if<EnergyRatio>(&spec)) {
    // States as vectors: v_s = X_s psi0.
    std::vector<CVector> v;
    v.reserve(S + 1);
    v.push_back(seq.x_init * e->psi0);
    for (std::size_t s = 0; s < S; ++s) v.push_back(props[s] * v.back());
    const CVector& v_final = v.back();
    const CVector h_v = e->h_tilde * v_final;
    out.objective = 1.0 - v_final.dot(h_v).real() / e->e_min;
    if (!with_gradient) return out;

    // kappa_S = H~ X_S psi0, kappa_{s-1} = U_s^dagger kappa_s;
    // dF/dtau_s = (2 / E_min) Re[i <kappa_s| H_s X_s psi0>].
    out.gradient.resize(static_cast<Eigen::Index>(S));
    CVector kappa = h_v;
    for (std::size_t s = S; s-- > 0;) {
      const Complex inner = kappa.dot(seq.hams[s] * v[s + 1]);
      out.gradient(static_cast<Eigen::Index>(s)) = (2.0 / e->e_min) * (Complex(0.0, 1.0) * inner).real();
      kappa = props[s].adjoint() * kappa;
    }
    return out;
  }

  const auto& f = std::get<Infidelity>(spec);
  std::vector<CMatrix> x;
  x.reserve(S + 1);
  x.push_back(seq.x_init);
  for (std::size_t s = 0; s < S; ++s) x.push_back(counted_product(props[s], x.back()));
  const Complex z = f.x_targ.conjugate().cwiseProduct(x.back()).sum();
  const double mag = std::abs(z);
  out.objective = 1.0 - mag / f.normalization;
  if (!with_gradient) return out;
  if (!(mag > kZeroOverlap)) {
    std::ostringstream msg;
    msg << "trace overlap |tr(X_targ^dagger X)| = " << mag << " is too small to define a phase";
    throw Error(ErrorCode::ZeroTraceOverlap, msg.str());
  }

  // lambda_S = X_targ, lambda_{s-1} = U_s^dagger lambda_s;
  // dF/dtau_s = (1/n) Re[i tr(lambda_s^dagger H_s X_s) e^{-i phi}].
  const Complex unphase = std::conj(z) / mag;
  out.gradient.resize(static_cast<Eigen::Index>(S));
  CMatrix lambda = f.x_targ;
  for (std::size_t s = S; s-- > 0;) {
    const Complex tr = lambda.conjugate().cwiseProduct(seq.hams[s] * x[s + 1]).sum();
    out.gradient(static_cast<Eigen::Index>(s)) =
        (Complex(0.0, 1.0) * tr * unphase).real() / f.normalization;
    lambda = props[s].adjoint() * lambda;
  }
  return out;
}

RVector sto_gradient(const ControllerSequence& seq, const SwitchingSchedule& sched,
                     const ObjectiveSpec& spec, EigCache& cache) {
  return evaluate_sto(seq, sched, spec, cache, true).gradient;
}

RVector project_simplex(const RVector& v, double total) {
  const Eigen::Index n = v.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "cannot project an empty vector");
  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumulative += sorted[static_cast<std::size_t>(j)];
    const double candidate = (cumulative - total) / static_cast<double>(j + 1);
    if (sorted[static_cast<std::size_t>(j)] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

double simplex_kkt(const RVector& tau, const RVector& grad, double total) {
  return (project_simplex(tau - grad, total) - tau).cwiseAbs().maxCoeff();
}

void StoOptions::validate() const {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "STO tolerance must be positive");
  if (max_iters < 0) throw Error(ErrorCode::InvalidArgument, "STO max_iters must be >= 0");
  if (lbfgs_memory < 0) throw Error(ErrorCode::InvalidArgument, "STO lbfgs_memory must be >= 0");
}

std::string to_string(StoStatus status) {
  switch (status) {
    case StoStatus::Converged: return "converged";
    case StoStatus::MaxIterations: return "max_iterations";
    case StoStatus::Stalled: return "stalled";
    case StoStatus::Degenerate: return "degenerate";
  }
  return "stalled";
}

namespace {

struct Pair {
  RVector s;
  RVector y;
  double rho;
};

// Zero-mean on the free coordinates, zero elsewhere.
RVector reduce(const RVector& v, const RVector& free_mask) {
  const double count = free_mask.sum();
  if (count == 0.0) return RVector::Zero(v.size());
  const double mean = v.cwiseProduct(free_mask).sum() / count;
  return ((v.array() - mean) * free_mask.array()).matrix();
}

RVector two_loop(const std::deque<Pair>& memory, const RVector& r, const RVector& free_mask) {
  RVector q = r;
  std::vector<double> alpha(memory.size());
  for (std::size_t i = memory.size(); i-- > 0;) {
    alpha[i] = memory[i].rho * memory[i].s.cwiseProduct(free_mask).dot(q);
    q -= alpha[i] * memory[i].y.cwiseProduct(free_mask);
  }
  const Pair& last = memory.back();
  RVector out = (last.s.dot(last.y) / last.y.squaredNorm()) * q;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const double beta = memory[i].rho * memory[i].y.cwiseProduct(free_mask).dot(out);
    out += (alpha[i] - beta) * memory[i].s.cwiseProduct(free_mask);
  }
  return -reduce(out, free_mask);
}

RVector as_vector(const std::vector<double>& v) {
  return Eigen::Map<const RVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> as_std(const RVector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

StoResult solve_sto(const ControllerSequence& seq, const ObjectiveSpec& spec, double t_f,
                    const StoOptions& opts) {
  EigCache cache(opts.use_cache);
  return solve_sto(seq, spec, t_f, opts, cache);
}

StoResult solve_sto(const ControllerSequence& seq, const ObjectiveSpec& spec, double t_f,
                    const StoOptions& opts, EigCache& cache) {
  opts.validate();
  seq.validate();
  if (!(std::abs(seq.t_f - t_f) <= 1e-9 * std::max(1.0, t_f))) {
    throw Error(ErrorCode::InvalidArgument, "sequence horizon differs from t_f");
  }
  const std::uint64_t decomp_start = cache.decompositions();
  const Eigen::Index S = seq.size();

  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;

  StoResult result;
  RVector tau = project_simplex(as_vector(seq.durations), t_f);
  SwitchingSchedule sched{as_std(tau), t_f};

  auto eval = [&](const RVector& t, bool grad) {
    return evaluate_sto(seq, SwitchingSchedule{as_std(t), t_f}, spec, cache, grad);
  };

  result.initial_objective = eval(tau, false).objective;
  StoEvaluation cur;
  try {
    cur = eval(tau, true);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ZeroTraceOverlap) throw;
    // The overlap phase is undefined here; nudge the schedule once.
    RVector nudged = tau;
    const double delta = 1e-6 * t_f / static_cast<double>(S);
    for (Eigen::Index s = 0; s < S; ++s) nudged(s) += (s % 2 == 0) ? delta : -delta;
    nudged = project_simplex(nudged, t_f);
    result.perturbed = true;
    try {
      cur = eval(nudged, true);
      tau = nudged;
    } catch (const Error& e2) {
      if (e2.code() != ErrorCode::ZeroTraceOverlap) throw;
      result.schedule = SwitchingSchedule{as_std(tau), t_f};
      result.objective = result.initial_objective;
      result.kkt = std::numeric_limits<double>::quiet_NaN();
      result.status = StoStatus::Degenerate;
      result.eigendecompositions = cache.decompositions() - decomp_start;
      result.cache_size = cache.size();
      return result;
    }
  }

  double kkt = simplex_kkt(tau, cur.gradient, t_f);
  result.trace.push_back({0, cur.objective, kkt, 0.0});
  result.status = StoStatus::MaxIterations;
  std::deque<Pair> memory;
  int iter = 0;

  while (true) {
    if (kkt <= opts.tol) {
      result.status = StoStatus::Converged;
      break;
    }
    if (iter >= opts.max_iters) break;

    const RVector& g = cur.gradient;
    // Free set: positive intervals plus zero intervals the gradient would grow.
    RVector free_mask(S);
    for (Eigen::Index s = 0; s < S; ++s) free_mask(s) = tau(s) > 0.0 ? 1.0 : 0.0;
    for (bool changed = true; changed;) {
      changed = false;
      const double count = free_mask.sum();
      const double mean = count > 0.0 ? g.cwiseProduct(free_mask).sum() / count : 0.0;
      for (Eigen::Index s = 0; s < S; ++s) {
        if (free_mask(s) == 0.0 && g(s) < mean) {
          free_mask(s) = 1.0;
          changed = true;
        }
      }
    }
    const RVector reduced = reduce(g, free_mask);

    bool accepted = false;
    double step = 0.0;
    RVector tau_new;
    double f_new = 0.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const bool quasi_newton = attempt == 0 && opts.lbfgs_memory > 0 && !memory.empty();
      if (attempt == 1 && !(opts.lbfgs_memory > 0 && !memory.empty())) break;
      RVector d = quasi_newton ? two_loop(memory, reduced, free_mask) : RVector(-reduced);
      if (!(g.dot(d) < 0.0)) d = -reduced;
      const double dmax = d.cwiseAbs().maxCoeff();
      if (dmax == 0.0) break;
      step = quasi_newton ? 1.0 : std::min(1.0, 0.25 * t_f / dmax);
      for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= 0.5) {
        tau_new = project_simplex(tau + step * d, t_f);
        const RVector move = tau_new - tau;
        if (move.cwiseAbs().maxCoeff() == 0.0) break;
        f_new = eval(tau_new, false).objective;
        const double decrease = std::min(g.dot(move), 0.0);
        if (f_new <= cur.objective + kArmijo * decrease && f_new <= cur.objective) {
          accepted = true;
          break;
        }
      }
      if (!accepted) memory.clear();
    }
    if (!accepted) {
      result.status = StoStatus::Stalled;
      break;
    }

    StoEvaluation next = eval(tau_new, true);
    if (opts.lbfgs_memory > 0) {
      RVector s = tau_new - tau;
      RVector y = next.gradient - g;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
        memory.push_back({std::move(s), std::move(y), 1.0 / sy});
        if (static_cast<int>(memory.size()) > opts.lbfgs_memory) memory.pop_front();
      }
    }
    tau = tau_new;
    cur = std::move(next);
    ++iter;
    kkt = simplex_kkt(tau, cur.gradient, t_f);
    result.trace.push_back({iter, cur.objective, kkt, step});
  }

  result.schedule = SwitchingSchedule{as_std(tau), t_f};
  result.schedule.validate();
  result.objective = cur.objective;
  result.kkt = kkt;
  result.iterations = iter;
  result.eigendecompositions = cache.decompositions() - decomp_start;
  result.cache_size = cache.size();
  return result;
}

std::pair<ControllerSequence, SwitchingSchedule> compress_schedule(
    const ControllerSequence& seq, const SwitchingSchedule& sched, double tol_zero) {
  check_lengths(seq, sched);
  const double tol = tol_zero < 0.0 ? 1e-7 * sched.t_f : tol_zero;
  const std::size_t S = seq.hams.size();

  std::vector<bool> keep(S);
  bool any = false;
  for (std::size_t s = 0; s < S; ++s) {
    keep[s] = sched.durations[s] > tol;
    any = any || keep[s];
  }
  if (!any) {
    const auto longest = std::max_element(sched.durations.begin(), sched.durations.end());
    keep[static_cast<std::size_t>(longest - sched.durations.begin())] = true;
  }

  std::vector<double> tau = sched.durations;
  for (std::size_t s = 0; s < S; ++s) {
    if (keep[s]) continue;
    std::size_t target = S;
    for (std::size_t p = s; p-- > 0;) {
      if (keep[p]) {
        target = p;
        break;
      }
    }
    if (target == S) {
      for (std::size_t n = s + 1; n < S; ++n) {
        if (keep[n]) {
          target = n;
          break;
        }
      }
    }
    tau[target] += tau[s];
    tau[s] = 0.0;
  }

  ControllerSequence out;
  out.x_init = seq.x_init;
  out.t_f = seq.t_f;
  SwitchingSchedule out_sched;
  out_sched.t_f = sched.t_f;
  for (std::size_t s = 0; s < S; ++s) {
    if (!keep[s]) continue;
    if (!out.control_vectors.empty() && out.control_vectors.back() == seq.control_vectors[s]) {
      out_sched.durations.back() += tau[s];
      continue;
    }
    out.hams.push_back(seq.hams[s]);
    out.control_vectors.push_back(seq.control_vectors[s]);
    out_sched.durations.push_back(tau[s]);
  }
  out.durations = out_sched.durations;
  return {out, out_sched};
}

}  // namespace qswitch
