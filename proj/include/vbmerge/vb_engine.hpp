#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "vbmerge/corpus.hpp"

namespace vbmerge {

/// Number of latent entities K and the Dirichlet concentration vector of
/// each field.
class HyperParams {
 public:
  HyperParams(std::size_t entity_count, std::vector<std::vector<double>> alpha);

  /// Symmetric prior: A_v = alpha for every value of every field.
  static HyperParams symmetric(std::size_t entity_count, double alpha,
                               const std::vector<std::size_t>& cardinalities);

  std::size_t entity_count() const { return entity_count_; }
  const std::vector<double>& alpha(std::size_t f) const { return alpha_[f]; }
  const std::vector<std::vector<double>>& alpha() const { return alpha_; }

  /// Throws ArgumentError unless the prior matches the corpus' fields.
  void check_compatible(const Corpus& corpus) const;

 private:
  std::size_t entity_count_;
  std::vector<std::vector<double>> alpha_;
};

/// Mean-field parameters: responsibilities phi (N x K, row-major) and
/// Dirichlet parameters lambda (K x sum_f V_f, row-major; field f of entity
/// k occupies [offset(f), offset(f) + V_f) within row k).
class VariationalState {
 public:
  VariationalState() = default;
  VariationalState(std::size_t records, std::size_t entity_count,
                   std::vector<std::size_t> cardinalities);

  std::size_t record_count() const { return records_; }
  std::size_t entity_count() const { return entities_; }
  std::size_t field_count() const { return cardinalities_.size(); }
  const std::vector<std::size_t>& cardinalities() const { return cardinalities_; }
  std::size_t value_slots() const { return slots_; }
  std::size_t offset(std::size_t f) const { return offsets_[f]; }

  std::span<double> phi_row(std::size_t n) {
    return {phi_.data() + n * entities_, entities_};
  }
  std::span<const double> phi_row(std::size_t n) const {
    return {phi_.data() + n * entities_, entities_};
  }
  double& phi(std::size_t n, std::size_t k) { return phi_[n * entities_ + k]; }
  double phi(std::size_t n, std::size_t k) const { return phi_[n * entities_ + k]; }

  /// lambda_{k f v} with v a 0-based value index.
  double& lambda(std::size_t k, std::size_t f, std::size_t v) {
    return lambda_[k * slots_ + offsets_[f] + v];
  }
  double lambda(std::size_t k, std::size_t f, std::size_t v) const {
    return lambda_[k * slots_ + offsets_[f] + v];
  }
  std::span<double> lambda_cell(std::size_t k, std::size_t f) {
    return {lambda_.data() + k * slots_ + offsets_[f], cardinalities_[f]};
  }
  std::span<const double> lambda_cell(std::size_t k, std::size_t f) const {
    return {lambda_.data() + k * slots_ + offsets_[f], cardinalities_[f]};
  }

  std::vector<double>& phi_data() { return phi_; }
  const std::vector<double>& phi_data() const { return phi_; }
  std::vector<double>& lambda_data() { return lambda_; }
  const std::vector<double>& lambda_data() const { return lambda_; }

  /// Returns a copy whose entity k is this state's entity perm[k].
  VariationalState permuted(std::span<const std::size_t> perm) const;

  bool operator==(const VariationalState&) const = default;

 private:
  std::size_t records_ = 0;
  std::size_t entities_ = 0;
  std::vector<std::size_t> cardinalities_;
  std::vector<std::size_t> offsets_;
  std::size_t slots_ = 0;
  std::vector<double> phi_;
  std::vector<double> lambda_;
};

struct FitOptions {
  std::size_t max_sweeps = 1000;
  double rel_tol = 1e-8;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct FitReport {
  std::vector<double> elbo_trace;
  std::size_t sweeps_run = 0;
  bool converged = false;
  double wall_time = 0.0;
};

struct FitResult {
  VariationalState state;
  FitReport report;
};

/// Called after each sweep with the sweep number (1-based), its ELBO and the
/// state after that sweep's lambda update.
using SweepObserver =
    std::function<void(std::size_t sweep, double elbo, const VariationalState&)>;

/// Draws each phi row from a symmetric Dirichlet(1) and sets lambda by one
/// update_lambda pass.
VariationalState init_state(const Corpus& corpus, const HyperParams& hp,
                            std::uint64_t seed);

/// lambda_{kfv} = A_v + sum_n phi_{nk} 1{x_{nf} = v}.
void update_lambda(VariationalState& state, const Corpus& corpus,
                   const HyperParams& hp, std::size_t workers = 1);

/// phi_{nk} proportional to exp(sum_f E_q[log beta_{k f x_{nf}}]), normalized
/// in log space.
void update_phi(VariationalState& state, const Corpus& corpus,
                const HyperParams& hp, std::size_t workers = 1);

/// Evidence lower bound, including the -N log K prior term on assignments.
double elbo(const VariationalState& state, const Corpus& corpus,
            const HyperParams& hp, std::size_t workers = 1);

/// Partial derivative of the ELBO with respect to lambda_{kfv}
/// (v is a 0-based value index).
double elbo_grad_lambda(const VariationalState& state, const Corpus& corpus,
                        const HyperParams& hp, std::size_t k, std::size_t f,
                        std::size_t v);

/// Coordinate ascent from init_state(corpus, hp, options.seed).
FitResult fit(const Corpus& corpus, const HyperParams& hp,
              const FitOptions& options, const SweepObserver& observer = {});

/// Coordinate ascent from a caller-supplied state.
FitResult fit_from(VariationalState state, const Corpus& corpus,
                   const HyperParams& hp, const FitOptions& options,
                   const SweepObserver& observer = {});

/// Versioned binary checkpoint of the corpus shape, prior, lambda and phi.
/// Doubles are stored as their IEEE-754 bit patterns, little-endian.
void write_checkpoint(const std::filesystem::path& path, const Corpus& corpus,
                      const HyperParams& hp, const VariationalState& state);

struct Checkpoint {
  std::vector<std::size_t> records_per_db;
  HyperParams hyper;
  VariationalState state;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace vbmerge
