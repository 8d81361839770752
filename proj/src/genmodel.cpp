#include "vbmerge/genmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "vbmerge/errors.hpp"
#include "vbmerge/numerics.hpp"

namespace vbmerge {

namespace {

void validate(const GenConfig& config) {
  if (config.cardinalities.empty()) throw ArgumentError("at least one field is required");
  if (config.db_sizes.empty()) throw ArgumentError("at least one database is required");
  for (std::size_t v : config.cardinalities) {
    if (v == 0) throw ArgumentError("field cardinalities must be >= 1");
  }
  if (config.small_cluster_max) {
    if (*config.small_cluster_max == 0) {
      throw ArgumentError("small-cluster maximum must be >= 1");
    }
  } else if (config.entity_count == 0) {
    throw ArgumentError("entity count must be >= 1");
  }

  if (const auto* peaked = std::get_if<PeakedNoise>(&config.noise)) {
    const double eps = peaked->epsilon;
    for (std::size_t v : config.cardinalities) {
      const double limit = 1.0 - 1.0 / static_cast<double>(v);
      const bool ok = v == 1 ? eps == 0.0 : (eps >= 0.0 && eps < limit);
      if (!ok) {
        throw ArgumentError("distortion " + std::to_string(eps) +
                            " outside [0, 1 - 1/V) for a field with V = " +
                            std::to_string(v));
      }
    }
  } else {
    const auto& alpha = std::get<DirichletNoise>(config.noise).alpha;
    if (alpha.size() != config.cardinalities.size()) {
      throw ArgumentError("Dirichlet noise needs one concentration vector per field");
    }
    for (std::size_t f = 0; f < alpha.size(); ++f) {
      if (alpha[f].size() != config.cardinalities[f]) {
        throw ArgumentError("concentration vector length differs from cardinality");
      }
      for (double a : alpha[f]) {
        if (!(a > 0.0) || !std::isfinite(a)) {
          throw ArgumentError("Dirichlet concentrations must be positive");
        }
      }
    }
  }
}

// Dirichlet draw via normalized log-gamma variates. For a < 1 the
// Gamma(a + 1) * U^(1/a) identity keeps tiny concentrations from
// underflowing to zero.
void sample_dirichlet(std::span<const double> alpha, std::span<double> out,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> log_gamma(alpha.size());
  for (std::size_t v = 0; v < alpha.size(); ++v) {
    const double a = alpha[v];
    if (a >= 1.0) {
      std::gamma_distribution<double> gamma(a, 1.0);
      log_gamma[v] = std::log(gamma(rng));
    } else {
      std::gamma_distribution<double> gamma(a + 1.0, 1.0);
      double u;
      do {
        u = unit(rng);
      } while (u <= 0.0);
      log_gamma[v] = std::log(gamma(rng)) + std::log(u) / a;
    }
  }
  const double norm = numerics::log_sum_exp(log_gamma);
  for (std::size_t v = 0; v < alpha.size(); ++v) out[v] = std::exp(log_gamma[v] - norm);
}

std::uint32_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double cumulative = 0.0;
  for (std::size_t v = 0; v + 1 < probs.size(); ++v) {
    cumulative += probs[v];
    if (u < cumulative) return static_cast<std::uint32_t>(v);
  }
  return static_cast<std::uint32_t>(probs.size() - 1);
}

}  // namespace

Schema synthetic_schema(const std::vector<std::size_t>& cardinalities) {
  std::vector<std::string> names;
  for (std::size_t f = 0; f < cardinalities.size(); ++f) {
    names.push_back("field" + std::to_string(f + 1));
  }
  Schema schema(std::move(names));
  for (std::size_t f = 0; f < cardinalities.size(); ++f) {
    for (std::size_t v = 0; v < cardinalities[f]; ++v) {
      schema.intern(f, "v" + std::to_string(v + 1));
    }
  }
  return schema;
}

std::pair<Corpus, GroundTruth> sample_dataset(const GenConfig& config) {
  validate(config);
  std::mt19937_64 rng(config.seed);

  const std::size_t F = config.cardinalities.size();
  const std::size_t N =
      std::accumulate(config.db_sizes.begin(), config.db_sizes.end(), std::size_t{0});
  std::vector<std::size_t> offsets;
  std::size_t slots = 0;
  for (std::size_t v : config.cardinalities) {
    offsets.push_back(slots);
    slots += v;
  }

  GroundTruth truth;
  truth.records_per_db = config.db_sizes;
  truth.assignments.resize(N);

  // Assignments.
  if (config.small_cluster_max) {
    std::uniform_int_distribution<std::size_t> size(1, *config.small_cluster_max);
    std::vector<std::uint32_t> labels;
    labels.reserve(N);
    std::uint32_t entity = 0;
    while (labels.size() < N) {
      ++entity;
      const std::size_t count = std::min(size(rng), N - labels.size());
      labels.insert(labels.end(), count, entity);
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    truth.entity_count = entity;
    truth.assignments = std::move(labels);
  } else {
    truth.entity_count = config.entity_count;
    std::uniform_int_distribution<std::uint32_t> pick(
        1, static_cast<std::uint32_t>(config.entity_count));
    for (auto& z : truth.assignments) z = pick(rng);
  }

  // Latent values and noise distributions.
  const std::size_t K = truth.entity_count;
  truth.latent_values.resize(K * F);
  truth.noise.assign(K * slots, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t V = config.cardinalities[f];
      std::span<double> beta(truth.noise.data() + k * slots + offsets[f], V);
      std::uint32_t& latent = truth.latent_values[k * F + f];
      if (const auto* peaked = std::get_if<PeakedNoise>(&config.noise)) {
        std::uniform_int_distribution<std::uint32_t> pick(1, static_cast<std::uint32_t>(V));
        latent = pick(rng);
        const double other = V > 1 ? peaked->epsilon / static_cast<double>(V - 1) : 0.0;
        std::fill(beta.begin(), beta.end(), other);
        beta[latent - 1] = 1.0 - peaked->epsilon;
      } else {
        sample_dirichlet(std::get<DirichletNoise>(config.noise).alpha[f], beta, rng);
        latent = static_cast<std::uint32_t>(
                     std::max_element(beta.begin(), beta.end()) - beta.begin()) +
                 1;
      }
    }
  }

  // Observations.
  std::vector<std::uint32_t> cells(N * F);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t k = truth.assignments[n] - 1;
    for (std::size_t f = 0; f < F; ++f) {
      std::span<const double> beta(truth.noise.data() + k * slots + offsets[f],
                                   config.cardinalities[f]);
      cells[n * F + f] = sample_categorical(beta, rng);
    }
  }

  Corpus corpus(synthetic_schema(config.cardinalities), config.db_sizes,
                std::move(cells));
  return {std::move(corpus), std::move(truth)};
}

std::filesystem::path latent_values_path(const std::filesystem::path& truth_path) {
  auto name = truth_path.stem().string() + "_latent.csv";
  return truth_path.parent_path() / name;
}

void write_ground_truth(const GroundTruth& truth, const Schema& schema,
                        const std::filesystem::path& path) {
  const std::size_t F = schema.field_count();
  if (truth.latent_values.size() != truth.entity_count * F) {
    throw ArgumentError("ground truth does not match the schema's field count");
  }
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "db,record,entity\n";
    std::size_t n = 0;
    for (std::size_t d = 0; d < truth.records_per_db.size(); ++d) {
      for (std::size_t r = 0; r < truth.records_per_db[d]; ++r, ++n) {
        out << d + 1 << ',' << r + 1 << ',' << truth.assignments.at(n) << '\n';
      }
    }
    if (!out) throw IoError("failed writing " + path.string());
  }
  const auto latent_path = latent_values_path(path);
  std::ofstream out(latent_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + latent_path.string());
  out << "entity,field,value\n";
  for (std::size_t k = 0; k < truth.entity_count; ++k) {
    for (std::size_t f = 0; f < F; ++f) {
      out << k + 1 << ',' << csv::escape(schema.field_name(f)) << ','
          << csv::escape(schema.decode(f, truth.latent_value(k, f, F))) << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + latent_path.string());
}

}  // namespace vbmerge
