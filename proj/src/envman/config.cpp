#include "batchlab/envman/config.hpp"

#include <cmath>
#include <fstream>

#include "batchlab/core/error.hpp"

namespace batchlab::env {

namespace {

template <typename T>
T read(const Json& object, const char* key, const std::string& where, T fallback) {
  const auto it = object.find(key);
  if (it == object.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
T read_required(const Json& object, const char* key, const std::string& where) {
  if (!object.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return read<T>(object, key, where, T{});
}

Range read_range(const Json& object, const char* key, const std::string& where, Range fallback) {
  const auto it = object.find(key);
  if (it == object.end()) return fallback;
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
    throw ConfigError(where + "." + key + ": expected [low, high]");
  }
  return {(*it)[0].get<double>(), (*it)[1].get<double>()};
}

const Json& require_object(const Json& value, const std::string& where) {
  if (!value.is_object()) throw ConfigError(where + ": expected an object");
  return value;
}

const Json& require_array(const Json& value, const std::string& where) {
  if (!value.is_array()) throw ConfigError(where + ": expected an array");
  return value;
}

Json read_params(const Json& object, const std::string& where) {
  const auto it = object.find("params");
  if (it == object.end()) return Json::object();
  return require_object(*it, where + ".params");
}

TermSpec parse_term(const Json& j, const std::string& where, std::vector<std::string> extra_keys) {
  require_object(j, where);
  extra_keys.insert(extra_keys.end(), {"name", "function", "params"});
  require_keys(j, extra_keys, where);
  TermSpec t;
  t.function = read_required<std::string>(j, "function", where);
  t.name = read<std::string>(j, "name", where, t.function);
  t.params = read_params(j, where);
  return t;
}

ObservationTermSpec parse_observation(const Json& j, const std::string& where) {
  ObservationTermSpec o;
  static_cast<TermSpec&>(o) = parse_term(j, where, {"noise", "clip", "scale"});
  if (const auto it = j.find("noise"); it != j.end()) {
    const std::string w = where + ".noise";
    require_object(*it, w);
    require_keys(*it, {"type", "std", "bound"}, w);
    const auto type = read<std::string>(*it, "type", w, "none");
    if (type == "gaussian") {
      o.noise = {NoiseKind::kGaussian, read_required<double>(*it, "std", w)};
    } else if (type == "uniform") {
      o.noise = {NoiseKind::kUniform, read_required<double>(*it, "bound", w)};
    } else if (type != "none") {
      throw ConfigError(w + ".type: unknown noise type '" + type + "'");
    }
    if (!(o.noise.magnitude >= 0.0)) throw ConfigError(w + ": noise magnitude must be >= 0");
  }
  if (j.contains("clip")) {
    o.clip = read_range(j, "clip", where, {});
    if (!(o.clip->first <= o.clip->second)) throw ConfigError(where + ".clip: low > high");
  }
  o.scale = read<double>(j, "scale", where, 1.0);
  return o;
}

EventTermSpec parse_event(const Json& j, const std::string& where) {
  require_object(j, where);
  require_keys(j,
               {"name", "mode", "parameter", "asset", "targets", "distribution", "range",
                "operation", "interval"},
               where);
  EventTermSpec e;
  e.parameter = read_required<std::string>(j, "parameter", where);
  e.name = read<std::string>(j, "name", where, e.parameter);
  try {
    e.mode = event_mode_from_string(read<std::string>(j, "mode", where, "reset"));
    e.distribution = distribution_from_string(read<std::string>(j, "distribution", where, "uniform"));
    e.op = event_op_from_string(read<std::string>(j, "operation", where, "scale"));
  } catch (const InvalidArgument& err) {
    throw ConfigError(where + ": " + err.what());
  }
  e.asset = read<std::string>(j, "asset", where, e.asset);
  e.targets = read<std::vector<std::string>>(j, "targets", where, {});
  e.range = read_range(j, "range", where, e.range);
  e.interval = read_range(j, "interval", where, e.interval);
  try {
    e.validate();
  } catch (const InvalidArgument& err) {
    throw ConfigError(where + ": " + err.what());
  }
  return e;
}

CommandTermSpec parse_command(const Json& j, const std::string& where) {
  require_object(j, where);
  require_keys(j, {"name", "ranges", "resampling_time"}, where);
  CommandTermSpec c;
  c.name = read_required<std::string>(j, "name", where);
  const Json& ranges = require_array(j.at("ranges"), where + ".ranges");
  for (const auto& r : ranges) {
    if (!r.is_array() || r.size() != 2) throw ConfigError(where + ".ranges: expected [low, high] pairs");
    c.ranges.emplace_back(r[0].get<double>(), r[1].get<double>());
  }
  c.resampling_time = read_range(j, "resampling_time", where, c.resampling_time);
  try {
    c.validate();
  } catch (const InvalidArgument& err) {
    throw ConfigError(where + ": " + err.what());
  }
  return c;
}

AdrSpec parse_adr(const Json& j, const std::string& where) {
  require_object(j, where);
  require_keys(j, {"widen_threshold", "narrow_threshold", "parameters"}, where);
  AdrSpec a;
  a.widen_threshold = read_required<double>(j, "widen_threshold", where);
  a.narrow_threshold = read_required<double>(j, "narrow_threshold", where);
  if (!(a.narrow_threshold < a.widen_threshold)) {
    throw ConfigError(where + ": narrow_threshold must be below widen_threshold");
  }
  if (j.contains("parameters")) {
    const Json& params = require_array(j.at("parameters"), where + ".parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string w = where + ".parameters[" + std::to_string(i) + "]";
      require_object(params[i], w);
      require_keys(params[i], {"event", "initial", "maximal", "step"}, w);
      AdrParameterSpec p;
      p.event = read_required<std::string>(params[i], "event", w);
      p.initial = read_range(params[i], "initial", w, {});
      p.maximal = read_range(params[i], "maximal", w, {});
      p.step = read_required<double>(params[i], "step", w);
      if (!(p.step > 0.0) || p.maximal.first > p.initial.first || p.maximal.second < p.initial.second ||
          p.initial.first > p.initial.second) {
        throw ConfigError(w + ": need step > 0 and initial range inside maximal range");
      }
      a.parameters.push_back(p);
    }
  }
  return a;
}

template <typename T, typename F>
std::vector<T> parse_list(const Json& doc, const char* key, const std::string& where, F parse) {
  std::vector<T> out;
  const auto it = doc.find(key);
  if (it == doc.end()) return out;
  const std::string w = where + "." + key;
  require_array(*it, w);
  for (std::size_t i = 0; i < it->size(); ++i) out.push_back(parse((*it)[i], w + "[" + std::to_string(i) + "]"));
  return out;
}

Json range_json(const Range& r) { return Json::array({r.first, r.second}); }

Json term_json(const TermSpec& t) {
  return Json{{"name", t.name}, {"function", t.function}, {"params", t.params}};
}

}  // namespace

int EnvSettings::max_episode_steps() const {
  return static_cast<int>(std::ceil(episode_length / env_dt() - 1e-9));
}

void EnvSettings::validate() const {
  if (env_count < 1) throw InvalidArgument("env_count must be >= 1");
  if (!(physics_dt > 0.0)) throw InvalidArgument("physics_dt must be > 0");
  if (decimation < 1) throw InvalidArgument("decimation must be >= 1");
  if (render_interval < 0) throw InvalidArgument("render_interval must be >= 0");
  if (!(episode_length > 0.0)) throw InvalidArgument("episode_length must be > 0");
}

EventMode event_mode_from_string(const std::string& name) {
  if (name == "startup") return EventMode::kStartup;
  if (name == "reset") return EventMode::kReset;
  if (name == "interval") return EventMode::kInterval;
  throw InvalidArgument("unknown event mode '" + name + "'");
}

EventOp event_op_from_string(const std::string& name) {
  if (name == "absolute") return EventOp::kAbsolute;
  if (name == "scale") return EventOp::kScale;
  if (name == "add") return EventOp::kAdd;
  throw InvalidArgument("unknown event operation '" + name + "'");
}

Distribution distribution_from_string(const std::string& name) {
  if (name == "uniform") return Distribution::kUniform;
  if (name == "log_uniform") return Distribution::kLogUniform;
  throw InvalidArgument("unknown distribution '" + name + "'");
}

void EventTermSpec::validate() const {
  if (!(range.first <= range.second)) throw InvalidArgument("event '" + name + "' range low > high");
  if (distribution == Distribution::kLogUniform && !(range.first > 0.0)) {
    throw InvalidArgument("event '" + name + "' log-uniform range must be positive");
  }
  if (mode == EventMode::kInterval && !(interval.first > 0.0 && interval.first <= interval.second)) {
    throw InvalidArgument("event '" + name + "' interval must satisfy 0 < low <= high");
  }
}

void CommandTermSpec::validate() const {
  if (ranges.empty()) throw InvalidArgument("command '" + name + "' has no components");
  for (const auto& r : ranges) {
    if (!(r.first <= r.second)) throw InvalidArgument("command '" + name + "' range low > high");
  }
  if (!(resampling_time.first > 0.0 && resampling_time.first <= resampling_time.second)) {
    throw InvalidArgument("command '" + name + "' resampling time must satisfy 0 < low <= high");
  }
}

void require_keys(const Json& object, const std::vector<std::string>& allowed,
                  const std::string& where) {
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (const auto& a : allowed) known = known || a == key;
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

EnvConfig parse_env_config(const Json& doc) {
  const std::string root = "config";
  require_object(doc, root);
  require_keys(doc,
               {"task", "env_count", "physics_dt", "decimation", "render_interval", "episode_length",
                "seed", "scene", "actions", "observations", "rewards", "terminations", "events",
                "commands", "curriculum", "adr"},
               root);
  EnvConfig c;
  c.task = read_required<std::string>(doc, "task", root);
  auto& s = c.settings;
  s.env_count = read<int>(doc, "env_count", root, s.env_count);
  s.physics_dt = read<double>(doc, "physics_dt", root, s.physics_dt);
  s.decimation = read<int>(doc, "decimation", root, s.decimation);
  s.render_interval = read<int>(doc, "render_interval", root, s.render_interval);
  s.episode_length = read<double>(doc, "episode_length", root, s.episode_length);
  s.seed = read<std::uint64_t>(doc, "seed", root, s.seed);
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(root + ": " + e.what());
  }
  if (const auto it = doc.find("scene"); it != doc.end()) c.scene = require_object(*it, root + ".scene");

  auto& m = c.managers;
  m.actions = parse_list<TermSpec>(doc, "actions", root, [](const Json& j, const std::string& w) {
    return parse_term(j, w, {});
  });
  if (const auto it = doc.find("observations"); it != doc.end()) {
    require_object(*it, root + ".observations");
    for (const auto& [group, terms] : it->items()) {
      m.observations[group] = parse_list<ObservationTermSpec>(*it, group.c_str(), root + ".observations",
                                                              parse_observation);
    }
  }
  m.rewards = parse_list<RewardTermSpec>(doc, "rewards", root, [](const Json& j, const std::string& w) {
    RewardTermSpec r;
    static_cast<TermSpec&>(r) = parse_term(j, w, {"weight"});
    r.weight = read_required<double>(j, "weight", w);
    return r;
  });
  m.terminations = parse_list<TermSpec>(doc, "terminations", root,
                                        [](const Json& j, const std::string& w) { return parse_term(j, w, {}); });
  m.events = parse_list<EventTermSpec>(doc, "events", root, parse_event);
  m.commands = parse_list<CommandTermSpec>(doc, "commands", root, parse_command);
  m.curriculum = parse_list<TermSpec>(doc, "curriculum", root,
                                      [](const Json& j, const std::string& w) { return parse_term(j, w, {}); });
  if (const auto it = doc.find("adr"); it != doc.end()) m.adr = parse_adr(*it, root + ".adr");
  return c;
}

EnvConfig load_env_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_env_config(doc);
}

Json to_json(const EnvConfig& c) {
  const auto& s = c.settings;
  Json doc{{"task", c.task},
           {"env_count", s.env_count},
           {"physics_dt", s.physics_dt},
           {"decimation", s.decimation},
           {"render_interval", s.render_interval},
           {"episode_length", s.episode_length},
           {"seed", s.seed},
           {"scene", c.scene}};
  const auto& m = c.managers;
  doc["actions"] = Json::array();
  for (const auto& a : m.actions) doc["actions"].push_back(term_json(a));
  doc["observations"] = Json::object();
  for (const auto& [group, terms] : m.observations) {
    auto& arr = doc["observations"][group] = Json::array();
    for (const auto& o : terms) {
      Json t = term_json(o);
      if (o.noise.kind == NoiseKind::kGaussian) t["noise"] = {{"type", "gaussian"}, {"std", o.noise.magnitude}};
      if (o.noise.kind == NoiseKind::kUniform) t["noise"] = {{"type", "uniform"}, {"bound", o.noise.magnitude}};
      if (o.clip) t["clip"] = range_json(*o.clip);
      t["scale"] = o.scale;
      arr.push_back(t);
    }
  }
  doc["rewards"] = Json::array();
  for (const auto& r : m.rewards) {
    Json t = term_json(r);
    t["weight"] = r.weight;
    doc["rewards"].push_back(t);
  }
  doc["terminations"] = Json::array();
  for (const auto& t : m.terminations) doc["terminations"].push_back(term_json(t));
  doc["events"] = Json::array();
  for (const auto& e : m.events) {
    static const char* modes[] = {"startup", "reset", "interval"};
    static const char* ops[] = {"absolute", "scale", "add"};
    doc["events"].push_back({{"name", e.name},
                             {"mode", modes[static_cast<int>(e.mode)]},
                             {"parameter", e.parameter},
                             {"asset", e.asset},
                             {"targets", e.targets},
                             {"distribution", e.distribution == Distribution::kUniform ? "uniform" : "log_uniform"},
                             {"range", range_json(e.range)},
                             {"operation", ops[static_cast<int>(e.op)]},
                             {"interval", range_json(e.interval)}});
  }
  doc["commands"] = Json::array();
  for (const auto& cmd : m.commands) {
    Json ranges = Json::array();
    for (const auto& r : cmd.ranges) ranges.push_back(range_json(r));
    doc["commands"].push_back(
        {{"name", cmd.name}, {"ranges", ranges}, {"resampling_time", range_json(cmd.resampling_time)}});
  }
  doc["curriculum"] = Json::array();
  for (const auto& t : m.curriculum) doc["curriculum"].push_back(term_json(t));
  if (m.adr) {
    Json params = Json::array();
    for (const auto& p : m.adr->parameters) {
      params.push_back({{"event", p.event},
                        {"initial", range_json(p.initial)},
                        {"maximal", range_json(p.maximal)},
                        {"step", p.step}});
    }
    doc["adr"] = {{"widen_threshold", m.adr->widen_threshold},
                  {"narrow_threshold", m.adr->narrow_threshold},
                  {"parameters", params}};
  }
  return doc;
}

}  // namespace batchlab::env
