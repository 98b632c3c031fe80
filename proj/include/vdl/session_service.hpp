#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include "vdl/active_loop.hpp"
#include "vdl/dataset.hpp"
#include "vdl/serialization.hpp"

namespace vdl {

namespace fs = std::filesystem;

/// Failure carrying the HTTP status it maps to.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct PoolRef {
  std::string path;  // as resolved on disk
  std::uint32_t checksum = 0;  // CRC-32 of the file bytes
  std::uint64_t split_seed = 0;
};

struct SessionRecord {
  std::string session_id;
  SessionState state;
  PoolRef pool_ref;
  std::string created;
  std::string updated;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

inline std::uint32_t file_crc32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  boost::crc_32_type crc;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    crc.process_bytes(buf, static_cast<std::size_t>(in.gcount()));
  }
  return crc.checksum();
}

inline json to_json(const SessionRecord& r) {
  return {{"session_id", r.session_id},
          {"pool_ref", {{"path", r.pool_ref.path}, {"checksum", r.pool_ref.checksum}, {"split_seed", r.pool_ref.split_seed}}},
          {"created", r.created},
          {"updated", r.updated},
          {"state", to_json(r.state)}};
}

inline SessionRecord record_from_json(const json& j) {
  SessionRecord r;
  r.session_id = j.at("session_id").get<std::string>();
  const json& p = j.at("pool_ref");
  r.pool_ref = {p.at("path").get<std::string>(), p.at("checksum").get<std::uint32_t>(),
                p.at("split_seed").get<std::uint64_t>()};
  r.created = j.at("created").get<std::string>();
  r.updated = j.at("updated").get<std::string>();
  r.state = session_from_json(j.at("state"));
  return r;
}

/// Writes `text` to `path` through a sibling temp file and a rename.
inline void write_atomically(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

/**
 * Human-oracle labeling sessions, one JSON document per session under
 * `state_dir`. Sessions are loaded lazily, so a new service over the same
 * directory resumes where a previous process stopped.
 *
 * Requests on distinct sessions run concurrently; per session, mutations take
 * an exclusive lock and reads a shared one.
 */
class SessionService {
 public:
  SessionService(fs::path state_dir, fs::path data_root, fs::path asset_root = {})
      : state_dir_(std::move(state_dir)), data_root_(std::move(data_root)), asset_root_(std::move(asset_root)) {
    fs::create_directories(state_dir_);
  }

  const fs::path& asset_root() const { return asset_root_; }

  /**
   * Body: {"dataset": path, "strategy": name, "k", "t", "seed", "split_seed",
   *        "hyperparameters": {"reg_c", "balanced", "rho", "alpha", "beta",
   *        "epsilon", "max_iterations", "gates": {"rep","div","amb"}}}
   * Everything but dataset and strategy is optional.
   */
  std::string create_session(const json& body) {
    if (!body.is_object() || !body.contains("dataset") || !body["dataset"].is_string())
      throw ServiceError(422, "request needs a string 'dataset'");
    const fs::path dataset = resolve_dataset(body["dataset"].get<std::string>());
    if (!fs::is_regular_file(dataset)) throw ServiceError(404, "dataset not found: " + body["dataset"].get<std::string>());

    SessionConfig cfg;
    std::uint64_t split_seed = 0;
    try {
      const std::string name = body.value("strategy", std::string{});
      const auto strategy = parse_strategy(name);
      if (!strategy) throw ServiceError(422, "unknown strategy '" + name + "'; allowed: " + strategy_names_joined());
      cfg.strategy = *strategy;
      cfg.k = body.value("k", std::size_t{16});
      cfg.t = body.value("t", std::size_t{10});
      cfg.seed = body.value("seed", std::uint64_t{0});
      split_seed = body.value("split_seed", cfg.seed);
      const json h = body.value("hyperparameters", json::object());
      cfg.classifier.reg_c = h.value("reg_c", cfg.classifier.reg_c);
      cfg.classifier.balanced = h.value("balanced", cfg.classifier.balanced);
      cfg.optimizer.rho = h.value("rho", cfg.optimizer.rho);
      cfg.optimizer.epsilon = h.value("epsilon", cfg.optimizer.epsilon);
      cfg.optimizer.max_iterations = h.value("max_iterations", cfg.optimizer.max_iterations);
      if (h.contains("alpha")) cfg.optimizer.alpha = h["alpha"].get<double>();
      if (h.contains("beta")) cfg.optimizer.beta = h["beta"].get<double>();
      if (h.contains("gates")) {
        const json& g = h["gates"];
        cfg.optimizer.gates = {g.value("rep", true), g.value("div", true), g.value("amb", true)};
      }
      cfg.optimizer.k = cfg.k;
      if (cfg.classifier.reg_c <= 0 || cfg.optimizer.rho <= 0 || cfg.optimizer.epsilon <= 0)
        throw ServiceError(422, "reg_c, rho and epsilon must be positive");
    } catch (const json::exception& e) {
      throw ServiceError(422, std::string("invalid request: ") + e.what());
    }

    auto pool = load_pool(dataset, split_seed);
    SessionRecord rec;
    try {
      rec.state = start_session(*pool, cfg);
    } catch (const std::invalid_argument& e) {
      throw ServiceError(422, e.what());
    } catch (const InvalidState& e) {
      throw ServiceError(422, e.what());
    }
    rec.session_id = new_session_id();
    rec.pool_ref = {dataset.string(), file_crc32(dataset), split_seed};
    rec.created = rec.updated = utc_timestamp();

    auto e = std::make_shared<Entry>();
    e->record = std::move(rec);
    e->pool = pool;
    persist(e->record);
    const std::string id = e->record.session_id;
    std::lock_guard lock(map_mutex_);
    entries_[id] = std::move(e);
    return id;
  }

  json get_display(const std::string& id) {
    auto e = entry(id);
    std::shared_lock lock(e->mutex);
    const SessionState& s = e->record.state;
    if (s.complete() || !s.pending) throw ServiceError(409, "session is complete");
    const Pool& pool = *e->pool;
    json items = json::array();
    for (SampleId sid : s.pending->sample_ids) {
      const Sample& smp = pool.sample(pool.index_of(sid));
      std::vector<double> preview(smp.features.data(),
                                  smp.features.data() + std::min<Eigen::Index>(smp.features.size(), kPreviewLength));
      items.push_back({{"sample_id", sid},
                       {"thumbnail_before", smp.thumbnail_before},
                       {"thumbnail_after", smp.thumbnail_after},
                       {"feature_preview", preview}});
    }
    return {{"session_id", id}, {"t", s.t}, {"T", s.config.t}, {"k", s.config.k},
            {"sampling_percent", sampling_percent(s.t, s.config.k, pool.size())}, {"items", items}};
  }

  /// Body: {"labels": {"<id>": +1|-1, ...}} or {"labels": [{"sample_id": id, "label": +1|-1}, ...]}.
  json submit_labels(const std::string& id, const json& body) {
    auto e = entry(id);
    std::unique_lock lock(e->mutex);
    const SessionState& s = e->record.state;
    if (s.complete() || !s.pending) throw ServiceError(409, "session is complete");

    std::vector<std::pair<SampleId, int>> submitted;
    try {
      const json& labels = body.at("labels");
      if (labels.is_object()) {
        for (auto it = labels.begin(); it != labels.end(); ++it) {
          SampleId sid = 0;
          if (!detail::parse_number(it.key(), sid)) throw ServiceError(422, "label key '" + it.key() + "' is not a sample id");
          submitted.emplace_back(sid, it.value().get<int>());
        }
      } else if (labels.is_array()) {
        for (const json& item : labels) submitted.emplace_back(item.at("sample_id").get<SampleId>(), item.at("label").get<int>());
      } else {
        throw ServiceError(422, "'labels' must be an object or an array");
      }
    } catch (const json::exception& ex) {
      throw ServiceError(422, std::string("invalid labels: ") + ex.what());
    }

    const auto consumed = shown_ids(s);
    const bool all_consumed = !submitted.empty() && std::all_of(submitted.begin(), submitted.end(), [&](const auto& p) {
      return consumed.count(p.first) != 0;
    });
    if (all_consumed) throw ServiceError(409, "display already labeled");

    std::map<SampleId, Label> by_id;
    for (const auto& [sid, v] : submitted) {
      if (v != 1 && v != -1) throw ServiceError(422, "label for " + std::to_string(sid) + " must be -1 or +1");
      if (!by_id.emplace(sid, label_from_int(v)).second) throw ServiceError(422, "duplicate sample id " + std::to_string(sid));
    }
    const auto& ids = s.pending->sample_ids;
    std::set<SampleId> expected(ids.begin(), ids.end());
    for (const auto& [sid, l] : by_id)
      if (!expected.count(sid)) throw ServiceError(422, "sample " + std::to_string(sid) + " is not in the current display");
    std::vector<Label> ordered;
    for (SampleId sid : ids) {
      auto it = by_id.find(sid);
      if (it == by_id.end()) throw ServiceError(422, "missing label for sample " + std::to_string(sid));
      ordered.push_back(it->second);
    }

    SessionRecord next = e->record;
    next.state = advance(s, ordered, *e->pool);
    next.updated = utc_timestamp();
    persist(next);
    e->record = std::move(next);
    const SessionState& ns = e->record.state;
    const auto& eer = ns.metrics.back().eer_percent;
    return {{"t", ns.t}, {"eer", eer ? json(*eer) : json(nullptr)}, {"next_display_ready", ns.pending.has_value()}};
  }

  json get_metrics(const std::string& id) {
    auto e = entry(id);
    std::shared_lock lock(e->mutex);
    json out = json::array();
    for (const auto& m : e->record.state.metrics) {
      out.push_back({{"iteration", m.iteration},
                     {"sampling_percent", m.sampling_percent},
                     {"eer_percent", m.eer_percent ? json(*m.eer_percent) : json(nullptr)}});
    }
    return out;
  }

  /// Snapshot of the stored record (tests and tooling).
  SessionRecord record(const std::string& id) {
    auto e = entry(id);
    std::shared_lock lock(e->mutex);
    return e->record;
  }

  fs::path session_file(const std::string& id) const { return state_dir_ / (id + ".json"); }

 private:
  static constexpr Eigen::Index kPreviewLength = 8;

  struct Entry {
    std::shared_mutex mutex;
    SessionRecord record;
    std::shared_ptr<const Pool> pool;
  };

  fs::path resolve_dataset(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : data_root_ / path;
  }

  std::shared_ptr<const Pool> load_pool(const fs::path& path, std::uint64_t split_seed) {
    const std::string key = path.string() + '#' + std::to_string(split_seed);
    std::lock_guard lock(pool_mutex_);
    if (auto it = pools_.find(key); it != pools_.end()) return it->second;
    std::shared_ptr<const Pool> pool;
    try {
      pool = std::make_shared<const Pool>(split_half(load_csv(path.string()), split_seed));
    } catch (const ParseError& e) {
      throw ServiceError(422, std::string("dataset: ") + e.what());
    } catch (const IntegrityError& e) {
      throw ServiceError(422, std::string("dataset: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ServiceError(422, std::string("dataset: ") + e.what());
    }
    pools_.emplace(key, pool);
    return pool;
  }

  std::shared_ptr<Entry> entry(const std::string& id) {
    std::lock_guard lock(map_mutex_);
    if (auto it = entries_.find(id); it != entries_.end()) return it->second;
    if (id.empty() || id.find_first_not_of("0123456789abcdef") != std::string::npos)
      throw ServiceError(404, "unknown session '" + id + "'");
    const fs::path file = session_file(id);
    if (!fs::is_regular_file(file)) throw ServiceError(404, "unknown session '" + id + "'");
    std::ifstream in(file);
    auto e = std::make_shared<Entry>();
    e->record = record_from_json(json::parse(in));
    const fs::path dataset = e->record.pool_ref.path;
    if (!fs::is_regular_file(dataset)) throw ServiceError(404, "dataset of session '" + id + "' is gone");
    if (file_crc32(dataset) != e->record.pool_ref.checksum)
      throw ServiceError(409, "dataset of session '" + id + "' changed since the session was created");
    e->pool = load_pool(dataset, e->record.pool_ref.split_seed);
    entries_[id] = e;
    return e;
  }

  void persist(const SessionRecord& r) const { write_atomically(session_file(r.session_id), to_json(r).dump(2)); }

  std::string new_session_id() {
    std::lock_guard lock(id_mutex_);
    while (true) {
      std::ostringstream out;
      out << std::hex << std::setw(16) << std::setfill('0') << id_rng_();
      const std::string id = out.str();
      if (!fs::exists(session_file(id))) return id;
    }
  }

  fs::path state_dir_;
  fs::path data_root_;
  fs::path asset_root_;
  std::mutex map_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> entries_;
  std::mutex pool_mutex_;
  std::map<std::string, std::shared_ptr<const Pool>> pools_;
  std::mutex id_mutex_;
  std::mt19937_64 id_rng_{std::random_device{}()};
};

}  // namespace vdl
