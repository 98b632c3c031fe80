#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "vdl/active_loop.hpp"

namespace vdl {

using nlohmann::json;

inline constexpr const char* kSessionSchema = "vdl.session/1";

inline std::string to_string(DisplayOrigin o) {
  switch (o) {
    case DisplayOrigin::virtual_early: return "virtual-early";
    case DisplayOrigin::virtual_surrogate: return "virtual-surrogate";
    case DisplayOrigin::random: return "random";
    case DisplayOrigin::uncertainty: return "uncertainty";
    case DisplayOrigin::maxmin: return "maxmin";
  }
  return "random";
}

inline DisplayOrigin origin_from_string(const std::string& s) {
  for (auto o : {DisplayOrigin::virtual_early, DisplayOrigin::virtual_surrogate, DisplayOrigin::random,
                 DisplayOrigin::uncertainty, DisplayOrigin::maxmin})
    if (to_string(o) == s) return o;
  throw std::invalid_argument("unknown display origin '" + s + "'");
}

inline json to_json(const ClassifierModel& m) {
  return {{"d", m.weights.size()},
          {"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())},
          {"bias", m.bias},
          {"reg_c", m.reg_c},
          {"temperature", m.temperature},
          {"trained_on", m.trained_on},
          {"degenerate", m.degenerate}};
}

inline ClassifierModel model_from_json(const json& j) {
  ClassifierModel m;
  const auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != j.at("d").get<std::size_t>()) throw std::invalid_argument("model: weight count does not match d");
  m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  m.bias = j.at("bias").get<double>();
  m.reg_c = j.at("reg_c").get<double>();
  m.temperature = j.at("temperature").get<double>();
  m.trained_on = j.at("trained_on").get<std::size_t>();
  m.degenerate = j.at("degenerate").get<bool>();
  return m;
}

inline json to_json(const SessionConfig& c) {
  json opt = {{"variant", c.optimizer.variant == Variant::early ? "early" : "surrogate"},
              {"rho", c.optimizer.rho},
              {"gates", {{"rep", c.optimizer.gates.rep}, {"div", c.optimizer.gates.div}, {"amb", c.optimizer.gates.amb}}},
              {"epsilon", c.optimizer.epsilon},
              {"max_iterations", c.optimizer.max_iterations},
              {"alpha", c.optimizer.alpha ? json(*c.optimizer.alpha) : json(nullptr)},
              {"beta", c.optimizer.beta ? json(*c.optimizer.beta) : json(nullptr)}};
  json cls = {{"reg_c", c.classifier.reg_c},
              {"temperature", c.classifier.temperature},
              {"balanced", c.classifier.balanced},
              {"tolerance", c.classifier.tolerance},
              {"max_iterations", c.classifier.max_iterations}};
  return {{"strategy", std::string(to_string(c.strategy))}, {"k", c.k}, {"t", c.t}, {"seed", c.seed},
          {"optimizer", opt}, {"classifier", cls}};
}

inline SessionConfig config_from_json(const json& j) {
  SessionConfig c;
  const auto name = j.at("strategy").get<std::string>();
  const auto s = parse_strategy(name);
  if (!s) throw std::invalid_argument("unknown strategy '" + name + "'");
  c.strategy = *s;
  c.k = j.at("k").get<std::size_t>();
  c.t = j.at("t").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& o = j.at("optimizer");
  c.optimizer.variant = o.at("variant").get<std::string>() == "early" ? Variant::early : Variant::surrogate;
  c.optimizer.rho = o.at("rho").get<double>();
  c.optimizer.gates = {o.at("gates").at("rep").get<bool>(), o.at("gates").at("div").get<bool>(),
                       o.at("gates").at("amb").get<bool>()};
  c.optimizer.epsilon = o.at("epsilon").get<double>();
  c.optimizer.max_iterations = o.at("max_iterations").get<std::size_t>();
  if (!o.at("alpha").is_null()) c.optimizer.alpha = o.at("alpha").get<double>();
  if (!o.at("beta").is_null()) c.optimizer.beta = o.at("beta").get<double>();
  c.optimizer.k = c.k;
  const json& cl = j.at("classifier");
  c.classifier.reg_c = cl.at("reg_c").get<double>();
  c.classifier.temperature = cl.at("temperature").get<double>();
  c.classifier.balanced = cl.at("balanced").get<bool>();
  c.classifier.tolerance = cl.at("tolerance").get<double>();
  c.classifier.max_iterations = cl.at("max_iterations").get<std::size_t>();
  return c;
}

inline json to_json(const Display& d) {
  return {{"origin", to_string(d.origin)}, {"sample_ids", d.sample_ids}};
}

inline Display display_from_json(const json& j) {
  return {j.at("sample_ids").get<std::vector<SampleId>>(), origin_from_string(j.at("origin").get<std::string>())};
}

inline json to_json(const SessionState& s) {
  json displays = json::array();
  for (const auto& ld : s.displays) {
    json labels = json::array();
    for (Label l : ld.labels) labels.push_back(to_int(l));
    json d = to_json(ld.display);
    d["labels"] = labels;
    displays.push_back(d);
  }
  json metrics = json::array();
  for (const auto& m : s.metrics) {
    metrics.push_back({{"iteration", m.iteration},
                       {"sampling_percent", m.sampling_percent},
                       {"eer_percent", m.eer_percent ? json(*m.eer_percent) : json(nullptr)}});
  }
  return {{"schema", kSessionSchema},
          {"config", to_json(s.config)},
          {"t", s.t},
          {"displays", displays},
          {"pending", s.pending ? to_json(*s.pending) : json(nullptr)},
          {"model", s.model ? to_json(*s.model) : json(nullptr)},
          {"metrics", metrics}};
}

inline SessionState session_from_json(const json& j) {
  if (j.at("schema").get<std::string>() != kSessionSchema)
    throw std::invalid_argument("unsupported session schema '" + j.at("schema").get<std::string>() + "'");
  SessionState s;
  s.config = config_from_json(j.at("config"));
  s.t = j.at("t").get<std::size_t>();
  for (const json& d : j.at("displays")) {
    LabeledDisplay ld{display_from_json(d), {}};
    for (const json& l : d.at("labels")) ld.labels.push_back(label_from_int(l.get<int>()));
    s.displays.push_back(std::move(ld));
  }
  if (!j.at("pending").is_null()) s.pending = display_from_json(j.at("pending"));
  if (!j.at("model").is_null()) s.model = model_from_json(j.at("model"));
  for (const json& m : j.at("metrics")) {
    MetricRecord r;
    r.iteration = m.at("iteration").get<std::size_t>();
    r.sampling_percent = m.at("sampling_percent").get<double>();
    if (!m.at("eer_percent").is_null()) r.eer_percent = m.at("eer_percent").get<double>();
    s.metrics.push_back(r);
  }
  return s;
}

}  // namespace vdl
