#include "bose/gibbs.hpp"

#include <fmt/format.h>

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "bose/kernels.hpp"

namespace bose::loops {

std::string to_string(Move m) {
  static const std::array<const char*, kMoveCount> names{"birth", "death", "translate", "stage", "merge", "cut"};
  return names[static_cast<int>(m)];
}

void GibbsOptions::validate(const BoxRegion& region) const {
  double total = 0.0;
  for (double p : move_probability) {
    if (!(p >= 0.0)) throw ArgumentError("move probabilities must be >= 0");
    total += p;
  }
  if (!(total > 0.0)) throw ArgumentError("move probabilities must not all vanish");
  if (!(translate_step > 0.0)) throw ArgumentError("translate_step must be positive");
  if (stage_links < 2) throw ArgumentError("stage_links must be >= 2");
  if (merge_links < 1 || merge_links > region.n_slices) throw ArgumentError("merge_links must be in [1, n_slices]");
  if (moves_per_sweep < 1) throw ArgumentError("moves_per_sweep must be >= 1");
  if (health_window < 1) throw ArgumentError("health_window must be >= 1");
}

double MoveStats::rate(Move m) const {
  const auto i = static_cast<int>(m);
  return attempted[i] ? static_cast<double>(accepted[i]) / static_cast<double>(attempted[i]) : 0.0;
}

double MoveStats::overall() const {
  std::uint64_t a = 0, t = 0;
  for (int i = 0; i < kMoveCount; ++i) {
    a += accepted[i];
    t += attempted[i];
  }
  return t ? static_cast<double>(a) / static_cast<double>(t) : 0.0;
}

// ---------------------------------------------------------------------------
// MoveKernel
// ---------------------------------------------------------------------------

namespace {

std::ptrdiff_t pmod(std::ptrdiff_t a, std::ptrdiff_t m) { return ((a % m) + m) % m; }

double safe_log(double x) { return x > 0.0 ? std::log(x) : -kInf; }

}  // namespace

MoveKernel::MoveKernel(double z, BoxRegion region, PairPotential V, GibbsOptions opt)
    : region_(region), V_(std::move(V)), opt_(opt) {
  region_.validate();
  opt_.validate(region_);
  double total = 0.0;
  for (double p : opt_.move_probability) total += p;
  for (double& p : opt_.move_probability) p /= total;
  nu_ = LoopIntensities::make(z, region_, opt_.j_max);
}

int MoveKernel::merge_links() const { return opt_.merge_links; }

double MoveKernel::energy_change(const LoopConfiguration& x, std::span<const std::size_t> removed,
                                 std::span<const BridgeLoop* const> added) const {
  if (V_.is_zero()) return 0.0;
  KahanSum fresh;
  for (std::size_t i = 0; i < added.size(); ++i) {
    const double e = energy_against(x, *added[i], removed, V_, region_) + self_energy(*added[i], V_, region_);
    if (std::isinf(e)) return kInf;
    fresh += e;
    for (std::size_t k = i + 1; k < added.size(); ++k) {
      const double p = pair_energy(*added[i], *added[k], V_, region_);
      if (std::isinf(p)) return kInf;
      fresh += p;
    }
  }
  KahanSum old;
  for (std::size_t i = 0; i < removed.size(); ++i) {
    const auto& l = x.loops[removed[i]];
    old += energy_against(x, l, removed, V_, region_) + self_energy(l, V_, region_);
    for (std::size_t k = i + 1; k < removed.size(); ++k) old += pair_energy(l, x.loops[removed[k]], V_, region_);
  }
  return fresh.value() - old.value();
}

MoveRatio MoveKernel::log_ratio_birth(const LoopConfiguration& x, const BridgeLoop& w) const {
  if (w.j > nu_.j_max) return {};
  const double q = survival_weight(region_, w);
  if (!(q > 0.0)) return {};
  const BridgeLoop* added[] = {&w};
  const double de = energy_change(x, {}, added);
  if (std::isinf(de)) return {-kInf, de};
  const double n1 = static_cast<double>(x.loops.size() + 1);
  return {-de + std::log(nu_.proposal_total) + log_p(Move::death) - log_p(Move::birth) - std::log(n1) +
              std::log(q),
          de};
}

MoveRatio MoveKernel::log_ratio_death(const LoopConfiguration& x, std::size_t idx) const {
  const auto& w = x.loops.at(idx);
  const std::size_t removed[] = {idx};
  const double de = energy_change(x, removed, {});
  const double n = static_cast<double>(x.loops.size());
  return {-de - std::log(nu_.proposal_total) - log_p(Move::death) + log_p(Move::birth) + std::log(n) -
              std::log(survival_weight(region_, w)),
          de};
}

MoveRatio MoveKernel::log_ratio_replace(const LoopConfiguration& x, std::size_t idx, const BridgeLoop& repl,
                                        std::ptrdiff_t first_link, std::size_t links) const {
  double lq = 0.0;
  if (!region_.periodic()) {
    const double qn = survival_weight(region_, repl, first_link, links);
    if (!(qn > 0.0)) return {};
    lq = std::log(qn) - std::log(survival_weight(region_, x.loops.at(idx), first_link, links));
  }
  const std::size_t removed[] = {idx};
  const BridgeLoop* added[] = {&repl};
  const double de = energy_change(x, removed, added);
  if (std::isinf(de)) return {-kInf, de};
  return {-de + lq, de};
}

MoveRatio MoveKernel::log_ratio_merge(const LoopConfiguration& x, const MergeProposal& mp) const {
  const auto& A = x.loops.at(mp.a);
  const auto& B = x.loops.at(mp.b);
  const int jc = A.j + B.j;
  if (jc > nu_.j_max || mp.a == mp.b) return {};
  const int m = opt_.merge_links;
  const double t = m * region_.dtau();
  const Vec& ap = A.at(mp.p);
  const Vec& apm = A.at(mp.p + m);
  const Vec& bq = B.at(mp.q);
  const Vec& bqm = B.at(mp.q + m);
  double lr = safe_log(endpoint_kernel(region_, ap, bqm, t)) + safe_log(endpoint_kernel(region_, bq, apm, t)) -
              safe_log(endpoint_kernel(region_, ap, apm, t)) - safe_log(endpoint_kernel(region_, bq, bqm, t));
  lr += log_p(Move::cut) - log_p(Move::merge) + std::log(static_cast<double>(x.loops.size())) + std::log(A.j) +
        std::log(B.j) - std::log(jc) - std::log(jc - 1);
  if (!region_.periodic()) {
    const std::ptrdiff_t p0 = pmod(mp.p, region_.n_slices);
    const double qn = survival_weight(region_, mp.merged, p0, static_cast<std::size_t>(m)) *
                      survival_weight(region_, mp.merged, p0 + static_cast<std::ptrdiff_t>(B.size()),
                                      static_cast<std::size_t>(m));
    if (!(qn > 0.0)) return {};
    const double qo = survival_weight(region_, A, mp.p, static_cast<std::size_t>(m)) *
                      survival_weight(region_, B, mp.q, static_cast<std::size_t>(m));
    lr += std::log(qn) - std::log(qo);
  }
  const std::size_t removed[] = {mp.a, mp.b};
  const BridgeLoop* added[] = {&mp.merged};
  const double de = energy_change(x, removed, added);
  if (std::isinf(de)) return {-kInf, de};
  return {lr - de, de};
}

MoveRatio MoveKernel::log_ratio_cut(const LoopConfiguration& y, const CutProposal& cp) const {
  const auto& C = y.loops.at(cp.c);
  const int jc = C.j;
  if (cp.k < 1 || cp.k >= jc) return {};
  const int m = opt_.merge_links;
  const double t = m * region_.dtau();
  const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(cp.k) * region_.n_slices;
  const Vec& cu = C.at(cp.u);
  const Vec& cum = C.at(cp.u + m);
  const Vec& cw = C.at(cp.u + K);
  const Vec& cwm = C.at(cp.u + K + m);
  double lr = safe_log(endpoint_kernel(region_, cu, cwm, t)) + safe_log(endpoint_kernel(region_, cw, cum, t)) -
              safe_log(endpoint_kernel(region_, cu, cum, t)) - safe_log(endpoint_kernel(region_, cw, cwm, t));
  const int j1 = jc - cp.k, j2 = cp.k;
  lr += log_p(Move::merge) - log_p(Move::cut) + std::log(jc) + std::log(jc - 1) -
        std::log(static_cast<double>(y.loops.size() + 1)) - std::log(j1) - std::log(j2);
  if (!region_.periodic()) {
    const double qn = survival_weight(region_, cp.piece1, cp.p1, static_cast<std::size_t>(m)) *
                      survival_weight(region_, cp.piece2, cp.p2, static_cast<std::size_t>(m));
    if (!(qn > 0.0)) return {};
    const double qo = survival_weight(region_, C, cp.u, static_cast<std::size_t>(m)) *
                      survival_weight(region_, C, cp.u + K, static_cast<std::size_t>(m));
    lr += std::log(qn) - std::log(qo);
  }
  const std::size_t removed[] = {cp.c};
  const BridgeLoop* added[] = {&cp.piece1, &cp.piece2};
  const double de = energy_change(y, removed, added);
  if (std::isinf(de)) return {-kInf, de};
  return {lr - de, de};
}

BridgeLoop MoveKernel::translated(const BridgeLoop& l, const Vec& delta) const {
  BridgeLoop out = l;
  for (auto& b : out.beads) {
    for (int i = 0; i < region_.d; ++i) b[i] += delta[i];
    b = wrap(region_, b);
  }
  return out;
}

std::optional<BridgeLoop> MoveKernel::restaged(const BridgeLoop& l, std::ptrdiff_t first, std::size_t links,
                                               Rng& rng) const {
  const auto m = static_cast<std::ptrdiff_t>(links);
  std::vector<Vec> path(links + 1, Vec{0, 0, 0});
  path[0] = l.at(first);
  Vec D{0, 0, 0};
  for (std::ptrdiff_t k = 0; k < m; ++k) {
    const Vec s = displacement(region_, l.at(first + k), l.at(first + k + 1));
    for (int i = 0; i < 3; ++i) D[i] += s[i];
  }
  for (int i = 0; i < 3; ++i) path[links][i] = path[0][i] + D[i];
  fill_bridge(path, region_.dtau(), region_.d, rng);
  if (!links_resolvable(region_, path)) return std::nullopt;
  BridgeLoop out = l;
  const auto M = static_cast<std::ptrdiff_t>(l.size());
  for (std::ptrdiff_t k = 1; k < m; ++k) out.beads[static_cast<std::size_t>(pmod(first + k, M))] = wrap(region_, path[k]);
  return out;
}

std::optional<std::vector<Vec>> MoveKernel::bridge_interior(const Vec& a, const Vec& b, int m, Rng& rng) const {
  const Vec D = sample_image_displacement(region_, displacement(region_, a, b), m * region_.dtau(), rng);
  std::vector<Vec> path(static_cast<std::size_t>(m) + 1, Vec{0, 0, 0});
  path[0] = a;
  for (int i = 0; i < 3; ++i) path[m][i] = a[i] + D[i];
  fill_bridge(path, region_.dtau(), region_.d, rng);
  if (!links_resolvable(region_, path)) return std::nullopt;
  std::vector<Vec> inner;
  inner.reserve(static_cast<std::size_t>(m > 0 ? m - 1 : 0));
  for (int k = 1; k < m; ++k) inner.push_back(wrap(region_, path[k]));
  return inner;
}

BridgeLoop MoveKernel::assemble_merge(const BridgeLoop& A, const BridgeLoop& B, std::ptrdiff_t p, std::ptrdiff_t q,
                                      const std::vector<Vec>& bridge1, const std::vector<Vec>& bridge2) const {
  const int m = opt_.merge_links;
  const auto MA = static_cast<std::ptrdiff_t>(A.size());
  const auto MB = static_cast<std::ptrdiff_t>(B.size());
  std::vector<Vec> S;
  S.reserve(static_cast<std::size_t>(MA + MB));
  S.push_back(A.at(p));
  S.insert(S.end(), bridge1.begin(), bridge1.end());
  for (std::ptrdiff_t t = m; t <= MB; ++t) S.push_back(B.at(q + t));
  S.insert(S.end(), bridge2.begin(), bridge2.end());
  for (std::ptrdiff_t t = m; t < MA; ++t) S.push_back(A.at(p + t));
  BridgeLoop C;
  C.j = A.j + B.j;
  C.beads.resize(S.size());
  const std::ptrdiff_t p0 = pmod(p, region_.n_slices);
  const auto MC = static_cast<std::ptrdiff_t>(S.size());
  for (std::ptrdiff_t t = 0; t < MC; ++t) C.beads[static_cast<std::size_t>(pmod(p0 + t, MC))] = S[static_cast<std::size_t>(t)];
  return C;
}

CutProposal MoveKernel::assemble_cut(const BridgeLoop& C, std::size_t c, std::ptrdiff_t u, int k,
                                     const std::vector<Vec>& bridge1, const std::vector<Vec>& bridge2) const {
  const int m = opt_.merge_links;
  const int n_s = region_.n_slices;
  const auto MC = static_cast<std::ptrdiff_t>(C.size());
  const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(k) * n_s;
  const std::ptrdiff_t M1 = MC - K;
  CutProposal cp;
  cp.c = c;
  cp.u = pmod(u, MC);
  cp.k = k;

  std::vector<Vec> S2;
  for (std::ptrdiff_t t = 0; t <= K - m; ++t) S2.push_back(C.at(u + m + t));
  S2.insert(S2.end(), bridge2.begin(), bridge2.end());
  std::vector<Vec> S1;
  for (std::ptrdiff_t t = 0; t <= M1 - m; ++t) S1.push_back(C.at(u + K + m + t));
  S1.insert(S1.end(), bridge1.begin(), bridge1.end());

  const std::ptrdiff_t off = pmod(u + m, n_s);
  cp.piece2.j = k;
  cp.piece2.beads.resize(static_cast<std::size_t>(K));
  for (std::ptrdiff_t t = 0; t < K; ++t) cp.piece2.beads[static_cast<std::size_t>(pmod(off + t, K))] = S2[static_cast<std::size_t>(t)];
  cp.piece1.j = C.j - k;
  cp.piece1.beads.resize(static_cast<std::size_t>(M1));
  for (std::ptrdiff_t t = 0; t < M1; ++t) cp.piece1.beads[static_cast<std::size_t>(pmod(off + t, M1))] = S1[static_cast<std::size_t>(t)];
  cp.p2 = pmod(off + K - m, K);
  cp.p1 = pmod(off + M1 - m, M1);
  return cp;
}

std::optional<MergeProposal> MoveKernel::propose_merge(const LoopConfiguration& x, Rng& rng) const {
  const std::size_t n = x.loops.size();
  if (n < 2) return std::nullopt;
  MergeProposal mp;
  mp.a = rng.index(n);
  mp.b = rng.index(n - 1);
  if (mp.b >= mp.a) ++mp.b;
  const auto& A = x.loops[mp.a];
  const auto& B = x.loops[mp.b];
  if (A.j + B.j > nu_.j_max) return std::nullopt;
  const int n_s = region_.n_slices;
  const int m = opt_.merge_links;
  mp.p = static_cast<std::ptrdiff_t>(rng.index(A.size()));
  mp.q = pmod(mp.p, n_s) + static_cast<std::ptrdiff_t>(n_s) * static_cast<std::ptrdiff_t>(rng.index(static_cast<std::size_t>(B.j)));
  auto b1 = bridge_interior(A.at(mp.p), B.at(mp.q + m), m, rng);
  if (!b1) return std::nullopt;
  auto b2 = bridge_interior(B.at(mp.q), A.at(mp.p + m), m, rng);
  if (!b2) return std::nullopt;
  mp.merged = assemble_merge(A, B, mp.p, mp.q, *b1, *b2);
  return mp;
}

std::optional<CutProposal> MoveKernel::propose_cut(const LoopConfiguration& y, Rng& rng) const {
  const std::size_t n = y.loops.size();
  if (n == 0) return std::nullopt;
  const std::size_t c = rng.index(n);
  const auto& C = y.loops[c];
  if (C.j < 2) return std::nullopt;
  const int m = opt_.merge_links;
  const auto u = static_cast<std::ptrdiff_t>(rng.index(C.size()));
  const int k = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(C.j - 1)));
  const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(k) * region_.n_slices;
  auto b1 = bridge_interior(C.at(u), C.at(u + K + m), m, rng);
  if (!b1) return std::nullopt;
  auto b2 = bridge_interior(C.at(u + K), C.at(u + m), m, rng);
  if (!b2) return std::nullopt;
  return assemble_cut(C, c, u, k, *b1, *b2);
}

// ---------------------------------------------------------------------------
// GibbsChain
// ---------------------------------------------------------------------------

GibbsChain::GibbsChain(double z, const BoxRegion& region, const PairPotential& V, std::uint64_t seed,
                       const GibbsOptions& opt)
    : kernel_(z, region, V, opt), rng_(seed) {
  const auto rep = V.check_stability(region.d, 64, derive_seed(seed, "stability", 0));
  if (!rep.stable) throw ArgumentError(fmt::format("potential {} failed the stability test", V.name()));
}

void GibbsChain::set_configuration(LoopConfiguration c) {
  for (const auto& l : c.loops) {
    validate_loop(l, kernel_.region());
    if (l.j > kernel_.intensities().j_max) throw ArgumentError("loop winding exceeds j_max");
  }
  const double e = interaction_energy(c, kernel_.potential(), kernel_.region());
  if (std::isinf(e)) throw ArgumentError("initial configuration has infinite energy");
  config_ = std::move(c);
  energy_ = e;
}

void GibbsChain::accept_energy(double delta) {
  energy_ += delta;
  const auto& r = kernel_.region();
  const double floor = -r.beta * kernel_.potential().stability_constant() * static_cast<double>(particle_number());
  if (energy_ < floor - 1e-9 * (1.0 + std::abs(energy_))) {
    throw ChainError(fmt::format("stability guard: energy {} below -beta B N = {}", energy_, floor));
  }
}

bool GibbsChain::attempt(Move mv) {
  const auto mi = static_cast<int>(mv);
  ++stats_.attempted[mi];
  const auto& r = kernel_.region();
  // Only evaluated proposals feed the health window: an empty gas is not a
  // stuck chain.
  auto accept = [&](double lr) {
    ++window_.attempted[mi];
    const double u = rng_.uniform();
    return lr >= 0.0 || std::log(u) < lr;
  };
  bool ok = false;
  switch (mv) {
    case Move::birth: {
      const int j = kernel_.intensities().sample_winding(rng_);
      auto w = propose_loop(r, j, rng_);
      const auto ratio = kernel_.log_ratio_birth(config_, w);
      if (accept(ratio.log_ratio)) {
        config_.loops.push_back(std::move(w));
        accept_energy(ratio.energy_change);
        ok = true;
      }
      break;
    }
    case Move::death: {
      if (config_.loops.empty()) break;
      const std::size_t idx = rng_.index(config_.loops.size());
      const auto ratio = kernel_.log_ratio_death(config_, idx);
      if (accept(ratio.log_ratio)) {
        config_.loops[idx] = std::move(config_.loops.back());
        config_.loops.pop_back();
        accept_energy(ratio.energy_change);
        ok = true;
      }
      break;
    }
    case Move::translate: {
      if (config_.loops.empty()) break;
      const std::size_t idx = rng_.index(config_.loops.size());
      Vec delta{0, 0, 0};
      for (int i = 0; i < r.d; ++i) delta[i] = rng_.uniform(-1.0, 1.0) * kernel_.options().translate_step;
      auto moved = kernel_.translated(config_.loops[idx], delta);
      const auto ratio = kernel_.log_ratio_replace(config_, idx, moved, 0, moved.size());
      if (accept(ratio.log_ratio)) {
        config_.loops[idx] = std::move(moved);
        accept_energy(ratio.energy_change);
        ok = true;
      }
      break;
    }
    case Move::stage: {
      if (config_.loops.empty()) break;
      const std::size_t idx = rng_.index(config_.loops.size());
      const auto& l = config_.loops[idx];
      const std::size_t m = std::min(static_cast<std::size_t>(kernel_.options().stage_links), l.size());
      const auto first = static_cast<std::ptrdiff_t>(rng_.index(l.size()));
      auto fresh = kernel_.restaged(l, first, m, rng_);
      if (!fresh) break;
      const auto ratio = kernel_.log_ratio_replace(config_, idx, *fresh, first, m);
      if (accept(ratio.log_ratio)) {
        config_.loops[idx] = std::move(*fresh);
        accept_energy(ratio.energy_change);
        ok = true;
      }
      break;
    }
    case Move::merge: {
      auto mp = kernel_.propose_merge(config_, rng_);
      if (!mp) break;
      const auto ratio = kernel_.log_ratio_merge(config_, *mp);
      if (accept(ratio.log_ratio)) {
        const std::size_t hi = std::max(mp->a, mp->b), lo = std::min(mp->a, mp->b);
        config_.loops.erase(config_.loops.begin() + static_cast<std::ptrdiff_t>(hi));
        config_.loops.erase(config_.loops.begin() + static_cast<std::ptrdiff_t>(lo));
        config_.loops.push_back(std::move(mp->merged));
        accept_energy(ratio.energy_change);
        ok = true;
      }
      break;
    }
    case Move::cut: {
      auto cp = kernel_.propose_cut(config_, rng_);
      if (!cp) break;
      const auto ratio = kernel_.log_ratio_cut(config_, *cp);
      if (accept(ratio.log_ratio)) {
        config_.loops.erase(config_.loops.begin() + static_cast<std::ptrdiff_t>(cp->c));
        config_.loops.push_back(std::move(cp->piece1));
        config_.loops.push_back(std::move(cp->piece2));
        accept_energy(ratio.energy_change);
        ok = true;
      }
      break;
    }
  }
  if (ok) {
    ++stats_.accepted[mi];
    ++window_.accepted[mi];
  }
  return ok;
}

void GibbsChain::sweep() {
  const auto& probs = kernel_.options().move_probability;
  for (std::size_t i = 0; i < kernel_.options().moves_per_sweep; ++i) {
    double u = rng_.uniform();
    int m = 0;
    for (; m < kMoveCount - 1; ++m) {
      u -= probs[m];
      if (u < 0.0) break;
    }
    attempt(static_cast<Move>(m));
  }
  ++sweeps_;
  ++window_sweeps_;
  health_check();
}

void GibbsChain::health_check() {
  if (window_sweeps_ < kernel_.options().health_window) return;
  const double rate = window_.overall();
  std::uint64_t evaluated = 0;
  for (auto a : window_.attempted) evaluated += a;
  if (evaluated > 0 && rate < kernel_.options().min_acceptance) {
    std::string detail;
    for (int i = 0; i < kMoveCount; ++i) {
      detail += fmt::format(" {}={:.4f}", to_string(static_cast<Move>(i)), window_.rate(static_cast<Move>(i)));
    }
    throw ChainError(fmt::format("acceptance {:.4f} below {} over {} sweeps;{}", rate,
                                 kernel_.options().min_acceptance, window_sweeps_, detail));
  }
  window_ = {};
  window_sweeps_ = 0;
}

void GibbsChain::run(std::size_t n_sweeps, const std::function<void(const GibbsChain&)>& observer) {
  for (std::size_t s = 0; s < n_sweeps; ++s) {
    sweep();
    if (observer) observer(*this);
  }
}

double GibbsChain::recompute_energy() {
  energy_ = interaction_energy(config_, kernel_.potential(), kernel_.region());
  return energy_;
}

std::string GibbsChain::csv_header() {
  return "sweep,N,loop_count,energy,acc_birth,acc_death,acc_translate,acc_stage,acc_merge,acc_cut";
}

std::string GibbsChain::csv_row() const {
  std::string row = fmt::format("{},{},{},{:.17g}", sweeps_, particle_number(), config_.loops.size(), energy_);
  for (int i = 0; i < kMoveCount; ++i) row += fmt::format(",{:.17g}", stats_.rate(static_cast<Move>(i)));
  return row;
}

// ---------------------------------------------------------------------------
// Checkpoints: <stem>.bin (little-endian blob) plus <stem>.json sidecar.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'B', 'O', 'S', 'E', 'L', 'O', 'O', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("truncated checkpoint");
  return v;
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

}  // namespace

void GibbsChain::save_checkpoint(const std::filesystem::path& stem) const {
  const auto& r = kernel_.region();
  const auto bin = with_ext(stem, ".bin");
  {
    std::ofstream os(bin, std::ios::binary);
    if (!os) throw ResourceError("cannot write checkpoint " + bin.string());
    os.write(kMagic, sizeof kMagic);
    put(os, kVersion);
    put(os, static_cast<std::int32_t>(r.d));
    put(os, r.L);
    put(os, static_cast<std::int32_t>(r.boundary == Boundary::periodic ? 0 : 1));
    put(os, r.beta);
    put(os, static_cast<std::int32_t>(r.n_slices));
    put(os, kernel_.z());
    put(os, static_cast<std::int32_t>(kernel_.intensities().j_max));
    put(os, static_cast<std::uint64_t>(sweeps_));
    const std::string st = rng_.state();
    put(os, static_cast<std::uint64_t>(st.size()));
    os.write(st.data(), static_cast<std::streamsize>(st.size()));
    for (int i = 0; i < kMoveCount; ++i) {
      put(os, stats_.attempted[i]);
      put(os, stats_.accepted[i]);
    }
    put(os, static_cast<std::uint64_t>(config_.loops.size()));
    for (const auto& l : config_.loops) {
      put(os, static_cast<std::int32_t>(l.j));
      for (const auto& b : l.beads)
        for (int i = 0; i < r.d; ++i) put(os, b[i]);
    }
  }
  nlohmann::json js;
  js["format"] = "bose-loop-checkpoint";
  js["version"] = kVersion;
  js["data"] = bin.filename().string();
  js["region"] = {{"d", r.d}, {"L", r.L}, {"boundary", to_string(r.boundary)}, {"beta", r.beta},
                  {"n_slices", r.n_slices}};
  js["z"] = kernel_.z();
  js["j_max"] = kernel_.intensities().j_max;
  js["potential"] = kernel_.potential().name();
  js["sweeps"] = sweeps_;
  js["loop_count"] = config_.loops.size();
  js["N"] = particle_number();
  js["energy"] = energy_;
  std::ofstream(with_ext(stem, ".json")) << js.dump(2) << '\n';
}

GibbsChain GibbsChain::load_checkpoint(const std::filesystem::path& stem, const PairPotential& V,
                                       const GibbsOptions& opt) {
  std::ifstream js_in(with_ext(stem, ".json"));
  if (!js_in) throw ConfigError("missing checkpoint sidecar " + with_ext(stem, ".json").string());
  const auto js = nlohmann::json::parse(js_in);
  if (js.at("potential").get<std::string>() != V.name()) {
    throw ConfigError(fmt::format("checkpoint was written for potential {}, not {}",
                                  js.at("potential").get<std::string>(), V.name()));
  }
  std::ifstream is(with_ext(stem, ".bin"), std::ios::binary);
  if (!is) throw ConfigError("missing checkpoint blob");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ConfigError("not a loop checkpoint");
  if (get<std::uint32_t>(is) != kVersion) throw ConfigError("unsupported checkpoint version");
  BoxRegion r;
  r.d = get<std::int32_t>(is);
  r.L = get<double>(is);
  r.boundary = get<std::int32_t>(is) == 0 ? Boundary::periodic : Boundary::dirichlet;
  r.beta = get<double>(is);
  r.n_slices = get<std::int32_t>(is);
  const double z = get<double>(is);
  GibbsOptions o = opt;
  o.j_max = get<std::int32_t>(is);
  const auto sweeps = get<std::uint64_t>(is);
  std::string st(get<std::uint64_t>(is), '\0');
  is.read(st.data(), static_cast<std::streamsize>(st.size()));
  GibbsChain chain(z, r, V, 0, o);
  chain.rng_.set_state(st);
  for (int i = 0; i < kMoveCount; ++i) {
    chain.stats_.attempted[i] = get<std::uint64_t>(is);
    chain.stats_.accepted[i] = get<std::uint64_t>(is);
  }
  LoopConfiguration c;
  c.loops.resize(get<std::uint64_t>(is));
  for (auto& l : c.loops) {
    l.j = get<std::int32_t>(is);
    l.beads.assign(static_cast<std::size_t>(l.j) * r.n_slices, Vec{0, 0, 0});
    for (auto& b : l.beads)
      for (int i = 0; i < r.d; ++i) b[i] = get<double>(is);
  }
  chain.set_configuration(std::move(c));
  chain.sweeps_ = sweeps;
  return chain;
}

// ---------------------------------------------------------------------------

GibbsRun gibbs_sample(double z, const BoxRegion& region, const PairPotential& V, std::size_t n_samples,
                      std::uint64_t seed, const GibbsOptions& opt, std::size_t burn_in, std::size_t thin,
                      bool keep_configurations) {
  if (thin < 1) throw ArgumentError("thin must be >= 1");
  GibbsChain chain(z, region, V, seed, opt);
  chain.run(burn_in);
  GibbsRun out;
  out.particle_number.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    chain.run(thin);
    out.particle_number.push_back(static_cast<double>(chain.particle_number()));
    out.loop_count.push_back(static_cast<double>(chain.configuration().loops.size()));
    out.energy.push_back(chain.energy());
    if (keep_configurations) out.samples.push_back(chain.configuration());
  }
  out.tau_int_N = integrated_autocorrelation_time(out.particle_number);
  out.stats = chain.stats();
  return out;
}

GibbsRun gibbs_sample_chains(std::size_t n_chains, double z, const BoxRegion& region, const PairPotential& V,
                             std::size_t n_samples_per_chain, std::uint64_t seed, const GibbsOptions& opt,
                             std::size_t burn_in, std::size_t thin, bool keep_configurations) {
  std::vector<GibbsRun> runs(n_chains);
  kernels::for_each_index(n_chains, [&](std::size_t c) {
    runs[c] = gibbs_sample(z, region, V, n_samples_per_chain, derive_seed(seed, "chain", c), opt, burn_in, thin,
                           keep_configurations);
  });
  GibbsRun out;
  for (auto& r : runs) {
    out.samples.insert(out.samples.end(), std::make_move_iterator(r.samples.begin()),
                       std::make_move_iterator(r.samples.end()));
    out.particle_number.insert(out.particle_number.end(), r.particle_number.begin(), r.particle_number.end());
    out.loop_count.insert(out.loop_count.end(), r.loop_count.begin(), r.loop_count.end());
    out.energy.insert(out.energy.end(), r.energy.begin(), r.energy.end());
    out.tau_int_N = std::max(out.tau_int_N, r.tau_int_N);
    for (int i = 0; i < kMoveCount; ++i) {
      out.stats.attempted[i] += r.stats.attempted[i];
      out.stats.accepted[i] += r.stats.accepted[i];
    }
  }
  return out;
}

}  // namespace bose::loops
