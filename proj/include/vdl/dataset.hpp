#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "vdl/errors.hpp"

namespace vdl {

using SampleId = std::int64_t;

/// Ground truth of one patch pair. `positive` means a relevant change.
enum class Label : int { negative = -1, positive = 1 };

inline int to_int(Label l) { return static_cast<int>(l); }

inline Label label_from_int(int v) {
  if (v == 1) return Label::positive;
  if (v == -1) return Label::negative;
  throw std::invalid_argument("label must be -1 or +1, got " + std::to_string(v));
}

enum class Split : std::uint8_t { unassigned, train, eval };

/// Who is asking for a ground-truth label. Reads are counted per purpose and
/// split so tests can prove training code never sees evaluation labels.
enum class LabelUse : std::uint8_t { oracle, evaluation, export_ };

struct Sample {
  SampleId id = 0;
  Eigen::VectorXd features;
  std::optional<Label> label;
  std::string thumbnail_before;
  std::string thumbnail_after;
};

/// An immutable collection of samples sharing one feature dimension.
class Pool {
 public:
  Pool() : audit_(std::make_shared<Audit>()) {}

  Pool(std::vector<Sample> samples, std::size_t dim) : audit_(std::make_shared<Audit>()) {
    dim_ = dim;
    features_.resize(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(dim));
    index_.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      if (static_cast<std::size_t>(s.features.size()) != dim) {
        throw IntegrityError("sample " + std::to_string(s.id) + " has " +
                             std::to_string(s.features.size()) + " features, pool dimension is " +
                             std::to_string(dim));
      }
      if (s.id < 0) throw IntegrityError("negative sample id " + std::to_string(s.id));
      if (!index_.emplace(s.id, i).second) {
        throw IntegrityError("duplicate sample id " + std::to_string(s.id));
      }
      features_.row(static_cast<Eigen::Index>(i)) = s.features.transpose();
    }
    samples_ = std::move(samples);
    split_.assign(samples_.size(), Split::unassigned);
  }

  std::size_t size() const { return samples_.size(); }
  std::size_t dim() const { return dim_; }

  /// n x d matrix, one row per sample in pool order.
  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& sample(std::size_t index) const { return samples_.at(index); }
  SampleId id(std::size_t index) const { return samples_.at(index).id; }

  std::size_t index_of(SampleId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw IntegrityError("unknown sample id " + std::to_string(id));
    return it->second;
  }
  bool contains(SampleId id) const { return index_.count(id) != 0; }

  Split split(std::size_t index) const { return split_.at(index); }
  bool is_split() const {
    return std::none_of(split_.begin(), split_.end(), [](Split s) { return s == Split::unassigned; });
  }

  /// Pool-order indices carrying the given tag.
  std::vector<std::size_t> indices(Split tag) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split_.size(); ++i)
      if (split_[i] == tag) out.push_back(i);
    return out;
  }

  std::optional<Label> ground_truth(std::size_t index, LabelUse use) const {
    const Split s = split_.at(index);
    audit_->reads[static_cast<std::size_t>(use)][static_cast<std::size_t>(s)].fetch_add(
        1, std::memory_order_relaxed);
    return samples_[index].label;
  }

  std::size_t label_reads(LabelUse use, Split split) const {
    return audit_->reads[static_cast<std::size_t>(use)][static_cast<std::size_t>(split)].load();
  }

  /// Copy of this pool with the given per-sample tags.
  Pool with_split(std::vector<Split> tags) const {
    if (tags.size() != samples_.size()) throw std::invalid_argument("split tag count mismatch");
    Pool out = *this;
    out.audit_ = std::make_shared<Audit>();
    out.split_ = std::move(tags);
    return out;
  }

 private:
  struct Audit {
    std::array<std::array<std::atomic<std::size_t>, 3>, 3> reads{};
  };

  std::vector<Sample> samples_;
  std::size_t dim_ = 0;
  Eigen::MatrixXd features_;
  std::vector<Split> split_;
  std::unordered_map<SampleId, std::size_t> index_;
  std::shared_ptr<Audit> audit_;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

/**
 * Reads a pool from CSV text.
 *
 * Header: `id,f0,...,f{d-1},label[,thumb_before,thumb_after]`. The label cell
 * may be empty (unlabeled sample). Fields are not quoted, so thumbnail paths
 * must not contain commas. Blank lines are ignored.
 */
inline Pool parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool thumbs = false;
  bool have_header = false;
  std::vector<Sample> samples;
  std::unordered_map<SampleId, std::size_t> seen;

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_fields(line);
    if (!have_header) {
      if (fields.size() < 2 || detail::trim(fields[0]) != "id") throw ParseError(line_no, "header must start with 'id'");
      std::size_t f = 1;
      while (f < fields.size() && detail::trim(fields[f]) == "f" + std::to_string(f - 1)) ++f;
      dim = f - 1;
      if (f >= fields.size() || detail::trim(fields[f]) != "label")
        throw ParseError(line_no, "expected 'label' column after f0..f" + std::to_string(dim == 0 ? 0 : dim - 1));
      const std::size_t rest = fields.size() - f - 1;
      if (rest == 2 && detail::trim(fields[f + 1]) == "thumb_before" && detail::trim(fields[f + 2]) == "thumb_after") {
        thumbs = true;
      } else if (rest != 0) {
        throw ParseError(line_no, "unexpected trailing header columns");
      }
      have_header = true;
      continue;
    }
    const std::size_t expected = 2 + dim + (thumbs ? 2 : 0);
    if (fields.size() != expected) {
      throw ParseError(line_no, "expected " + std::to_string(expected) + " fields, got " + std::to_string(fields.size()));
    }
    Sample s;
    if (!detail::parse_number(fields[0], s.id)) throw ParseError(line_no, "id is not an integer");
    s.features.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0;
      if (!detail::parse_number(fields[1 + j], v)) {
        throw ParseError(line_no, "feature f" + std::to_string(j) + " is not numeric: '" +
                                      std::string(detail::trim(fields[1 + j])) + "'");
      }
      s.features[static_cast<Eigen::Index>(j)] = v;
    }
    const std::string_view label = detail::trim(fields[1 + dim]);
    if (!label.empty()) {
      int v = 0;
      if (!detail::parse_number(label, v) || (v != 1 && v != -1)) throw ParseError(line_no, "label must be -1, +1 or empty");
      s.label = label_from_int(v);
    }
    if (thumbs) {
      s.thumbnail_before = std::string(detail::trim(fields[2 + dim]));
      s.thumbnail_after = std::string(detail::trim(fields[3 + dim]));
    }
    if (!seen.emplace(s.id, line_no).second) {
      throw IntegrityError("duplicate sample id " + std::to_string(s.id) + " at line " + std::to_string(line_no));
    }
    samples.push_back(std::move(s));
  }
  if (!have_header) throw ParseError(line_no == 0 ? 1 : line_no, "missing header row");
  return Pool(std::move(samples), dim);
}

inline Pool load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_csv(in);
}

inline void write_csv(const Pool& pool, std::ostream& out) {
  const bool thumbs = std::any_of(pool.samples().begin(), pool.samples().end(), [](const Sample& s) {
    return !s.thumbnail_before.empty() || !s.thumbnail_after.empty();
  });
  out << "id";
  for (std::size_t j = 0; j < pool.dim(); ++j) out << ",f" << j;
  out << ",label";
  if (thumbs) out << ",thumb_before,thumb_after";
  out << '\n';
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Sample& s = pool.sample(i);
    out << s.id;
    for (Eigen::Index j = 0; j < s.features.size(); ++j) out << ',' << detail::format_double(s.features[j]);
    out << ',';
    if (auto l = pool.ground_truth(i, LabelUse::export_)) out << to_int(*l);
    if (thumbs) out << ',' << s.thumbnail_before << ',' << s.thumbnail_after;
    out << '\n';
  }
}

inline void write_csv(const Pool& pool, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(pool, out);
}

/// Shape of the synthetic change-detection pool.
struct SynthesisGeometry {
  std::size_t negative_modes = 4;
  double mode_separation = 6.0;  // distance of each negative mode centre from the origin
  double negative_spread = 1.0;  // per-axis std of negative modes
  double positive_spread = 0.5;  // per-axis std of the rare positive mode
  double positive_offset = 2.5;  // distance of the positive centre from its host negative mode
};

/**
 * Deterministic stand-in for a bitemporal patch-pair pool.
 *
 * Negatives come from `negative_modes` Gaussian modes whose centres lie on
 * distinct axes (alternating sign) at `mode_separation` from the origin.
 * Positives come from one compact mode displaced from the first negative mode
 * along a direction orthogonal to every mode axis, so its tail overlaps that
 * mode. Exactly round(n * positive_fraction) samples are positive; positions of
 * positives in the pool are shuffled.
 */
inline Pool synthesize(std::size_t n, std::size_t d, double positive_fraction, std::uint64_t seed,
                       const SynthesisGeometry& geo = {}) {
  if (n < 2) throw std::invalid_argument("synthesize: n must be >= 2");
  if (d < 2) throw std::invalid_argument("synthesize: d must be >= 2");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0))
    throw std::invalid_argument("synthesize: positive_fraction must lie in (0,1)");
  if (geo.negative_modes < 3) throw std::invalid_argument("synthesize: need at least 3 negative modes");
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * positive_fraction));
  if (n_pos == 0 || n_pos == n) {
    throw std::invalid_argument("synthesize: positive count rounds to " + std::to_string(n_pos));
  }

  const auto D = static_cast<Eigen::Index>(d);
  std::vector<Eigen::VectorXd> centres;
  for (std::size_t m = 0; m < geo.negative_modes; ++m) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(D);
    const auto axis = static_cast<Eigen::Index>(m / 2 % d);
    c[axis] = (m % 2 == 0 ? 1.0 : -1.0) * geo.mode_separation;
    centres.push_back(c);
  }
  // Offset axis: first one not used by a mode centre, or a diagonal fallback in low dimension.
  Eigen::VectorXd offset_dir = Eigen::VectorXd::Zero(D);
  const std::size_t used_axes = (geo.negative_modes + 1) / 2;
  if (used_axes < d) {
    offset_dir[static_cast<Eigen::Index>(used_axes)] = 1.0;
  } else {
    offset_dir.setOnes();
    offset_dir[0] = 0.0;
    offset_dir.normalize();
  }
  const Eigen::VectorXd positive_centre = centres[0] + geo.positive_offset * offset_dir;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<bool> is_positive(n, false);
  std::fill(is_positive.begin(), is_positive.begin() + static_cast<std::ptrdiff_t>(n_pos), true);
  std::shuffle(is_positive.begin(), is_positive.end(), rng);

  std::vector<Sample> samples(n);
  std::size_t neg_seen = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Sample& s = samples[i];
    s.id = static_cast<SampleId>(i);
    s.features.resize(D);
    if (is_positive[i]) {
      for (Eigen::Index j = 0; j < D; ++j) s.features[j] = positive_centre[j] + geo.positive_spread * gauss(rng);
      s.label = Label::positive;
    } else {
      const Eigen::VectorXd& c = centres[neg_seen++ % centres.size()];
      for (Eigen::Index j = 0; j < D; ++j) s.features[j] = c[j] + geo.negative_spread * gauss(rng);
      s.label = Label::negative;
    }
  }
  return Pool(std::move(samples), d);
}

/**
 * Random even split: the first floor(n/2) samples of a seeded permutation are
 * TRAIN, the rest EVAL. With `stratified`, each class is permuted and split on
 * its own (unlabeled samples form a third stratum).
 */
inline Pool split_half(const Pool& pool, std::uint64_t seed, bool stratified = false) {
  const std::size_t n = pool.size();
  if (n < 2) throw std::invalid_argument("split_half: need at least 2 samples");
  std::mt19937_64 rng(seed);
  std::vector<Split> tags(n, Split::eval);
  if (!stratified) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t r = 0; r < n / 2; ++r) tags[perm[r]] = Split::train;
    return pool.with_split(std::move(tags));
  }
  std::array<std::vector<std::size_t>, 3> strata;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = pool.sample(i).label;
    strata[!l ? 2 : (*l == Label::positive ? 1 : 0)].push_back(i);
  }
  // Rounding is alternated across strata so the total TRAIN size is still floor(n/2).
  std::size_t remaining = n / 2;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& idx = strata[s];
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t take = (s + 1 == strata.size()) ? remaining : std::min(remaining, idx.size() / 2);
    take = std::min(take, idx.size());
    for (std::size_t r = 0; r < take; ++r) tags[idx[r]] = Split::train;
    remaining -= take;
  }
  if (remaining > 0) {
    for (std::size_t i = 0; i < n && remaining > 0; ++i) {
      if (tags[i] == Split::eval) {
        tags[i] = Split::train;
        --remaining;
      }
    }
  }
  return pool.with_split(std::move(tags));
}

}  // namespace vdl
