#include "vbmerge/vb_engine.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "parallel.hpp"
#include "vbmerge/errors.hpp"
#include "vbmerge/numerics.hpp"

namespace vbmerge {

// ---------------------------------------------------------------- HyperParams

HyperParams::HyperParams(std::size_t entity_count,
                         std::vector<std::vector<double>> alpha)
    : entity_count_(entity_count), alpha_(std::move(alpha)) {
  if (entity_count_ == 0) throw ArgumentError("entity count K must be >= 1");
  for (const auto& field : alpha_) {
    for (double a : field) {
      if (!(a > 0.0) || !std::isfinite(a)) {
        throw ArgumentError("Dirichlet concentrations must be positive and finite");
      }
    }
  }
}

HyperParams HyperParams::symmetric(std::size_t entity_count, double alpha,
                                   const std::vector<std::size_t>& cardinalities) {
  std::vector<std::vector<double>> per_field;
  per_field.reserve(cardinalities.size());
  for (std::size_t v : cardinalities) per_field.emplace_back(v, alpha);
  return HyperParams(entity_count, std::move(per_field));
}

void HyperParams::check_compatible(const Corpus& corpus) const {
  if (alpha_.size() != corpus.field_count()) {
    throw ArgumentError("prior has " + std::to_string(alpha_.size()) +
                        " fields, corpus has " +
                        std::to_string(corpus.field_count()));
  }
  for (std::size_t f = 0; f < alpha_.size(); ++f) {
    if (alpha_[f].size() != corpus.schema().cardinality(f)) {
      throw ArgumentError("prior for field '" + corpus.schema().field_name(f) +
                          "' has the wrong number of values");
    }
  }
}

// ---------------------------------------------------------------- state

VariationalState::VariationalState(std::size_t records, std::size_t entity_count,
                                   std::vector<std::size_t> cardinalities)
    : records_(records),
      entities_(entity_count),
      cardinalities_(std::move(cardinalities)) {
  offsets_.reserve(cardinalities_.size());
  for (std::size_t v : cardinalities_) {
    offsets_.push_back(slots_);
    slots_ += v;
  }
  phi_.assign(records_ * entities_, 0.0);
  lambda_.assign(entities_ * slots_, 0.0);
}

VariationalState VariationalState::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != entities_) throw ArgumentError("permutation has wrong size");
  VariationalState out(records_, entities_, cardinalities_);
  for (std::size_t n = 0; n < records_; ++n) {
    for (std::size_t k = 0; k < entities_; ++k) out.phi(n, k) = phi(n, perm[k]);
  }
  for (std::size_t k = 0; k < entities_; ++k) {
    std::copy_n(lambda_.begin() + perm[k] * slots_, slots_,
                out.lambda_.begin() + k * slots_);
  }
  return out;
}

// ---------------------------------------------------------------- internals

namespace {

void check_shapes(const VariationalState& state, const Corpus& corpus,
                  const HyperParams& hp) {
  hp.check_compatible(corpus);
  if (state.record_count() != corpus.total_records() ||
      state.entity_count() != hp.entity_count() ||
      state.cardinalities() != corpus.schema().cardinalities()) {
    throw ArgumentError("variational state does not match corpus and prior");
  }
}

// Expected counts sum_n phi_{nk} 1{x_{nf} = v}, laid out slot-major
// (slot * K + k). Entities are partitioned across workers; every cell is
// accumulated in record order, so the result does not depend on `workers`.
std::vector<double> expected_counts(const VariationalState& state,
                                    const Corpus& corpus, std::size_t workers) {
  const std::size_t K = state.entity_count();
  const std::size_t F = state.field_count();
  std::vector<double> counts(state.value_slots() * K, 0.0);
  detail::parallel_ranges(K, workers, [&](std::size_t k0, std::size_t k1) {
    for (std::size_t n = 0; n < state.record_count(); ++n) {
      const auto x = corpus.row(n);
      const double* phi = state.phi_row(n).data();
      for (std::size_t f = 0; f < F; ++f) {
        double* out = counts.data() + (state.offset(f) + x[f]) * K;
        for (std::size_t k = k0; k < k1; ++k) out[k] += phi[k];
      }
    }
  });
  return counts;
}

void assign_lambda(VariationalState& state, const HyperParams& hp,
                   const std::vector<double>& counts) {
  const std::size_t K = state.entity_count();
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t f = 0; f < state.field_count(); ++f) {
      const auto& prior = hp.alpha(f);
      auto cell = state.lambda_cell(k, f);
      for (std::size_t v = 0; v < cell.size(); ++v) {
        cell[v] = prior[v] + counts[(state.offset(f) + v) * K + k];
      }
    }
  }
}

// E_q[log beta_{kfv}] = psi(lambda_{kfv}) - psi(sum_u lambda_{kfu}), slot-major.
std::vector<double> expected_log_beta(const VariationalState& state) {
  const std::size_t K = state.entity_count();
  std::vector<double> table(state.value_slots() * K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t f = 0; f < state.field_count(); ++f) {
      const auto cell = state.lambda_cell(k, f);
      double total = 0.0;
      for (double l : cell) total += l;
      const double psi_total = numerics::digamma(total);
      for (std::size_t v = 0; v < cell.size(); ++v) {
        table[(state.offset(f) + v) * K + k] = numerics::digamma(cell[v]) - psi_total;
      }
    }
  }
  return table;
}

// Dirichlet prior, likelihood and Dirichlet entropy terms, per (k, f):
//   sum_v (A_v + c_kfv - lambda_kfv) E[log beta_kfv] + log B(lambda) - log B(A)
double cell_terms(const VariationalState& state, const HyperParams& hp,
                  const std::vector<double>& counts) {
  const std::size_t K = state.entity_count();
  const auto elog = expected_log_beta(state);
  double cells = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t f = 0; f < state.field_count(); ++f) {
      const auto& prior = hp.alpha(f);
      const auto lambda = state.lambda_cell(k, f);
      double term = numerics::log_multivariate_beta(lambda) -
                    numerics::log_multivariate_beta(prior);
      for (std::size_t v = 0; v < lambda.size(); ++v) {
        const std::size_t slot = (state.offset(f) + v) * K + k;
        term += (prior[v] + counts[slot] - lambda[v]) * elog[slot];
      }
      cells += term;
    }
  }
  return cells;
}

double sum_in_order(const std::vector<double>& values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

double assignment_entropy(const VariationalState& state, std::size_t workers) {
  std::vector<double> entropy(state.record_count(), 0.0);
  detail::parallel_ranges(state.record_count(), workers,
                          [&](std::size_t begin, std::size_t end) {
                            for (std::size_t n = begin; n < end; ++n) {
                              double h = 0.0;
                              for (double p : state.phi_row(n)) {
                                if (p > 0.0) h -= p * std::log(p);
                              }
                              entropy[n] = h;
                            }
                          });
  return sum_in_order(entropy);
}

double assemble_elbo(const VariationalState& state, double cells, double entropy) {
  const double assignment_prior = -static_cast<double>(state.record_count()) *
                                  std::log(static_cast<double>(state.entity_count()));
  return cells + entropy + assignment_prior;
}

// Sets every phi row from the current lambda and returns the assignment
// entropy of the new rows. With s the row's scores and Z its log normalizer,
// -sum_k phi_k log phi_k = Z - sum_k phi_k s_k, so no logarithms are needed.
double phi_pass(VariationalState& state, const Corpus& corpus, std::size_t workers) {
  const std::size_t K = state.entity_count();
  const std::size_t F = state.field_count();
  const auto elog = expected_log_beta(state);
  std::vector<double> entropy(state.record_count(), 0.0);
  detail::parallel_ranges(
      state.record_count(), workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> score(K);
        for (std::size_t n = begin; n < end; ++n) {
          std::fill(score.begin(), score.end(), 0.0);
          const auto x = corpus.row(n);
          for (std::size_t f = 0; f < F; ++f) {
            const double* table = elog.data() + (state.offset(f) + x[f]) * K;
            for (std::size_t k = 0; k < K; ++k) score[k] += table[k];
          }
          const double top = *std::max_element(score.begin(), score.end());
          double* row = state.phi_row(n).data();
          double mass = 0.0;
          for (std::size_t k = 0; k < K; ++k) mass += (row[k] = std::exp(score[k] - top));
          const double inv = 1.0 / mass;
          double expected_score = 0.0;
          for (std::size_t k = 0; k < K; ++k) {
            row[k] *= inv;
            expected_score += row[k] * score[k];
          }
          entropy[n] = top + std::log(mass) - expected_score;
        }
      });
  return sum_in_order(entropy);
}

std::string state_statistics(const VariationalState& state) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t bad_lambda = 0;
  for (double l : state.lambda_data()) {
    if (!std::isfinite(l)) {
      ++bad_lambda;
      continue;
    }
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  std::size_t bad_phi = 0;
  for (double p : state.phi_data()) {
    if (!std::isfinite(p)) ++bad_phi;
  }
  std::ostringstream out;
  out << "lambda range [" << lo << ", " << hi << "], non-finite lambda "
      << bad_lambda << ", non-finite phi " << bad_phi;
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------- operations

VariationalState init_state(const Corpus& corpus, const HyperParams& hp,
                            std::uint64_t seed) {
  hp.check_compatible(corpus);
  VariationalState state(corpus.total_records(), hp.entity_count(),
                         corpus.schema().cardinalities());
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> unit_exponential(1.0);
  const std::size_t K = hp.entity_count();
  for (std::size_t n = 0; n < state.record_count(); ++n) {
    auto row = state.phi_row(n);
    if (K == 1) {
      row[0] = 1.0;
      continue;
    }
    double total = 0.0;
    for (double& p : row) {
      do {
        p = unit_exponential(rng);
      } while (!(p > 0.0));
      total += p;
    }
    for (double& p : row) p /= total;
  }
  update_lambda(state, corpus, hp);
  return state;
}

void update_lambda(VariationalState& state, const Corpus& corpus,
                   const HyperParams& hp, std::size_t workers) {
  check_shapes(state, corpus, hp);
  assign_lambda(state, hp, expected_counts(state, corpus, workers));
}

void update_phi(VariationalState& state, const Corpus& corpus,
                const HyperParams& hp, std::size_t workers) {
  check_shapes(state, corpus, hp);
  phi_pass(state, corpus, workers);
}

double elbo(const VariationalState& state, const Corpus& corpus,
            const HyperParams& hp, std::size_t workers) {
  check_shapes(state, corpus, hp);
  const auto counts = expected_counts(state, corpus, workers);
  return assemble_elbo(state, cell_terms(state, hp, counts), assignment_entropy(state, workers));
}

double elbo_grad_lambda(const VariationalState& state, const Corpus& corpus,
                        const HyperParams& hp, std::size_t k, std::size_t f,
                        std::size_t v) {
  check_shapes(state, corpus, hp);
  if (k >= state.entity_count() || f >= state.field_count() ||
      v >= state.cardinalities()[f]) {
    throw IndexError("lambda coordinate out of range");
  }
  const auto lambda = state.lambda_cell(k, f);
  const auto& prior = hp.alpha(f);
  std::vector<double> counts(lambda.size(), 0.0);
  for (std::size_t n = 0; n < state.record_count(); ++n) {
    counts[corpus.row(n)[f]] += state.phi(n, k);
  }
  double total = 0.0;
  double residual_total = 0.0;
  for (std::size_t u = 0; u < lambda.size(); ++u) {
    total += lambda[u];
    residual_total += prior[u] - lambda[u] + counts[u];
  }
  const double residual = prior[v] - lambda[v] + counts[v];
  return numerics::trigamma(lambda[v]) * residual -
         numerics::trigamma(total) * residual_total;
}

FitResult fit(const Corpus& corpus, const HyperParams& hp,
              const FitOptions& options, const SweepObserver& observer) {
  return fit_from(init_state(corpus, hp, options.seed), corpus, hp, options,
                  observer);
}

FitResult fit_from(VariationalState state, const Corpus& corpus,
                   const HyperParams& hp, const FitOptions& options,
                   const SweepObserver& observer) {
  if (options.max_sweeps < 1) throw ArgumentError("max_sweeps must be >= 1");
  if (!(options.rel_tol > 0.0)) throw ArgumentError("rel_tol must be > 0");
  if (options.workers < 1) throw ArgumentError("workers must be >= 1");
  check_shapes(state, corpus, hp);

  const auto start = std::chrono::steady_clock::now();
  FitReport report;
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    double value = 0.0;
    try {
      const double entropy = phi_pass(state, corpus, options.workers);
      const auto counts = expected_counts(state, corpus, options.workers);
      assign_lambda(state, hp, counts);
      value = assemble_elbo(state, cell_terms(state, hp, counts), entropy);
    } catch (const DomainError& e) {
      throw NumericalFailure(sweep, std::string(e.what()) + "; " + state_statistics(state));
    }
    if (!std::isfinite(value)) throw NumericalFailure(sweep, state_statistics(state));

    report.elbo_trace.push_back(value);
    report.sweeps_run = sweep;
    if (observer) observer(sweep, value, state);
    if (sweep >= 2) {
      const double previous = report.elbo_trace[sweep - 2];
      if (std::abs(value - previous) <= options.rel_tol * std::abs(value)) {
        report.converged = true;
        break;
      }
    }
  }
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(state), std::move(report)};
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kCheckpointMagic[8] = {'V', 'B', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint64_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u64(std::uint64_t value) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    out_.write(bytes, 8);
  }
  void f64(double value) { u64(std::bit_cast<std::uint64_t>(value)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}
  std::uint64_t u64() {
    unsigned char bytes[8];
    in_.read(reinterpret_cast<char*>(bytes), 8);
    if (!in_) throw IoError(name_ + ": truncated checkpoint");
    std::uint64_t value = 0;
    for (int i = 0; i < 8; ++i) value |= std::uint64_t{bytes[i]} << (8 * i);
    return value;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  // Guards allocations against corrupt size fields.
  std::size_t count(std::uint64_t limit = std::uint64_t{1} << 40) {
    const auto value = u64();
    if (value > limit) throw IoError(name_ + ": implausible size in checkpoint");
    return static_cast<std::size_t>(value);
  }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Corpus& corpus,
                      const HyperParams& hp, const VariationalState& state) {
  check_shapes(state, corpus, hp);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  Writer w(out);
  w.u64(kCheckpointVersion);
  w.u64(corpus.database_count());
  for (std::size_t r : corpus.records_per_db()) w.u64(r);
  w.u64(state.field_count());
  for (std::size_t v : state.cardinalities()) w.u64(v);
  w.u64(state.entity_count());
  for (const auto& field : hp.alpha()) {
    for (double a : field) w.f64(a);
  }
  for (double l : state.lambda_data()) w.f64(l);
  for (double p : state.phi_data()) w.f64(p);
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kCheckpointMagic)) {
    throw IoError(path.string() + ": not a checkpoint file");
  }
  Reader r(in, path.string());
  if (const auto version = r.u64(); version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " +
                  std::to_string(version));
  }
  std::vector<std::size_t> records_per_db(r.count());
  std::size_t records = 0;
  for (auto& count : records_per_db) records += (count = r.count());
  std::vector<std::size_t> cardinalities(r.count());
  for (auto& v : cardinalities) v = r.count();
  const std::size_t entities = r.count();

  std::vector<std::vector<double>> alpha;
  for (std::size_t v : cardinalities) {
    auto& field = alpha.emplace_back(v);
    for (double& a : field) a = r.f64();
  }
  VariationalState state(records, entities, cardinalities);
  for (double& l : state.lambda_data()) l = r.f64();
  for (double& p : state.phi_data()) p = r.f64();
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(path.string() + ": trailing bytes after checkpoint");
  }
  return {std::move(records_per_db), HyperParams(entities, std::move(alpha)),
          std::move(state)};
}

}  // namespace vbmerge
