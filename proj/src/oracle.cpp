#include "vbmerge/oracle.hpp"

#include <cmath>
#include <limits>

#include "vbmerge/errors.hpp"
#include "vbmerge/numerics.hpp"

namespace vbmerge::oracle {

namespace {

// Walks every assignment in index order, keeping integer counts per
// (entity, field, value) and the log Dirichlet-multinomial term of each
// (entity, field) cell up to date as the odometer moves records.
class Enumerator {
 public:
  Enumerator(const Corpus& corpus, const HyperParams& hp)
      : corpus_(corpus),
        hp_(hp),
        K_(hp.entity_count()),
        F_(corpus.field_count()),
        N_(corpus.total_records()),
        labels_(N_, 0) {
    for (std::size_t f = 0; f < F_; ++f) {
      offsets_.push_back(slots_);
      slots_ += corpus.schema().cardinality(f);
      prior_log_beta_.push_back(numerics::log_multivariate_beta(hp.alpha(f)));
    }
    counts_.assign(K_ * slots_, 0);
    cell_terms_.assign(K_ * F_, 0.0);
    for (std::size_t n = 0; n < N_; ++n) add(n, 0, +1);
    for (std::size_t f = 0; f < F_; ++f) refresh(0, f);
    log_prior_ = -static_cast<double>(N_) * std::log(static_cast<double>(K_));
  }

  const std::vector<std::size_t>& labels() const { return labels_; }

  double log_joint() const {
    double total = log_prior_;
    for (double t : cell_terms_) total += t;
    return total;
  }

  // Advances to the next assignment; returns false after the last one.
  bool next() {
    for (std::size_t n = 0; n < N_; ++n) {
      const std::size_t from = labels_[n];
      const std::size_t to = from + 1 == K_ ? 0 : from + 1;
      move(n, from, to);
      if (to != 0) return true;
    }
    return false;
  }

 private:
  void add(std::size_t n, std::size_t k, int delta) {
    const auto x = corpus_.row(n);
    for (std::size_t f = 0; f < F_; ++f) {
      counts_[k * slots_ + offsets_[f] + x[f]] += delta;
    }
  }

  void refresh(std::size_t k, std::size_t f) {
    const auto& prior = hp_.alpha(f);
    const long* c = counts_.data() + k * slots_ + offsets_[f];
    double sum_lgamma = 0.0;
    double total = 0.0;
    for (std::size_t v = 0; v < prior.size(); ++v) {
      const double a = prior[v] + static_cast<double>(c[v]);
      sum_lgamma += std::lgamma(a);
      total += a;
    }
    cell_terms_[k * F_ + f] = sum_lgamma - std::lgamma(total) - prior_log_beta_[f];
  }

  void move(std::size_t n, std::size_t from, std::size_t to) {
    add(n, from, -1);
    add(n, to, +1);
    labels_[n] = to;
    for (std::size_t f = 0; f < F_; ++f) {
      refresh(from, f);
      refresh(to, f);
    }
  }

  const Corpus& corpus_;
  const HyperParams& hp_;
  std::size_t K_;
  std::size_t F_;
  std::size_t N_;
  std::size_t slots_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<double> prior_log_beta_;
  std::vector<long> counts_;
  std::vector<double> cell_terms_;
  std::vector<std::size_t> labels_;
  double log_prior_ = 0.0;
};

void check_budget(const Corpus& corpus, const HyperParams& hp, std::uint64_t budget) {
  hp.check_compatible(corpus);
  const auto count = assignment_count(hp.entity_count(), corpus.total_records());
  if (count > budget) {
    throw SizeError("exact enumeration needs " + std::to_string(hp.entity_count()) +
                    "^" + std::to_string(corpus.total_records()) +
                    " assignments, over the budget of " + std::to_string(budget));
  }
}

std::vector<double> log_joints(const Corpus& corpus, const HyperParams& hp) {
  Enumerator walk(corpus, hp);
  std::vector<double> out;
  out.reserve(assignment_count(hp.entity_count(), corpus.total_records()));
  do {
    out.push_back(walk.log_joint());
  } while (walk.next());
  return out;
}

}  // namespace

std::uint64_t assignment_count(std::size_t entity_count, std::size_t records) {
  std::uint64_t count = 1;
  for (std::size_t n = 0; n < records; ++n) {
    if (entity_count != 0 &&
        count > std::numeric_limits<std::uint64_t>::max() / entity_count) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    count *= entity_count;
  }
  return count;
}

std::vector<std::size_t> ExactPosterior::assignment(std::uint64_t index) const {
  std::vector<std::size_t> labels(record_count);
  for (auto& z : labels) {
    z = static_cast<std::size_t>(index % entity_count);
    index /= entity_count;
  }
  return labels;
}

ExactPosterior exact_posterior(const Corpus& corpus, const HyperParams& hp,
                               std::uint64_t budget) {
  check_budget(corpus, hp, budget);
  ExactPosterior post;
  post.entity_count = hp.entity_count();
  post.record_count = corpus.total_records();
  post.assignment_log_probs = log_joints(corpus, hp);
  post.log_evidence = numerics::log_sum_exp(post.assignment_log_probs);
  for (double& lp : post.assignment_log_probs) lp -= post.log_evidence;

  const std::size_t N = post.record_count;
  post.cocluster.assign(N * N, 0.0);
  std::vector<std::size_t> labels(N, 0);
  for (double lp : post.assignment_log_probs) {
    const double p = std::exp(lp);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = i + 1; j < N; ++j) {
        if (labels[i] == labels[j]) post.cocluster[i * N + j] += p;
      }
    }
    for (std::size_t n = 0; n < N; ++n) {
      if (++labels[n] < post.entity_count) break;
      labels[n] = 0;
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    post.cocluster[i * N + i] = 1.0;
    for (std::size_t j = i + 1; j < N; ++j) {
      post.cocluster[j * N + i] = post.cocluster[i * N + j];
    }
  }
  return post;
}

double exact_log_evidence(const Corpus& corpus, const HyperParams& hp,
                          std::uint64_t budget) {
  check_budget(corpus, hp, budget);
  return numerics::log_sum_exp(log_joints(corpus, hp));
}

std::vector<double> exact_cocluster(const Corpus& corpus, const HyperParams& hp,
                                    std::uint64_t budget) {
  return exact_posterior(corpus, hp, budget).cocluster;
}

}  // namespace vbmerge::oracle
