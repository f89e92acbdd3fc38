#include "batchlab/envman/managers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "batchlab/core/error.hpp"

namespace batchlab::env {

namespace {

double sample(std::mt19937_64& rng, Distribution dist, const Range& r) {
  if (dist == Distribution::kLogUniform) {
    return std::exp(std::uniform_real_distribution<double>(std::log(r.first), std::log(r.second))(rng));
  }
  return std::uniform_real_distribution<double>(r.first, r.second)(rng);
}

double apply_op(EventOp op, double nominal, double value) {
  switch (op) {
    case EventOp::kAbsolute:
      return value;
    case EventOp::kScale:
      return nominal * value;
    case EventOp::kAdd:
      return nominal + value;
  }
  return value;
}

template <typename Map>
const auto& lookup(const Map& map, const std::string& id, const std::string& kind) {
  const auto it = map.find(id);
  if (it == map.end()) throw ConfigError("unknown " + kind + " function '" + id + "'");
  return it->second;
}

template <typename F>
auto bind_term(const F& factory, const TermSpec& spec, const Scene& scene, const std::string& kind) {
  try {
    return factory(spec.params, scene);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(kind + " term '" + spec.name + "': " + e.what());
  } catch (const Json::exception& e) {
    throw ConfigError(kind + " term '" + spec.name + "': " + e.what());
  }
}

bool is_state_parameter(const std::string& p) {
  return p == "joint_pos" || p == "joint_vel" || p == "push_velocity";
}

}  // namespace

// ---------------------------------------------------------------------------
// ADR

AdrState AdrState::from_spec(const AdrSpec& spec) {
  AdrState s;
  s.widen_threshold = spec.widen_threshold;
  s.narrow_threshold = spec.narrow_threshold;
  for (const auto& p : spec.parameters) s.ranges.push_back({p.event, p.initial, p.maximal, p.initial, p.step});
  s.validate();
  return s;
}

void AdrState::validate() const {
  if (!(narrow_threshold < widen_threshold)) throw InvalidArgument("adr thresholds must satisfy narrow < widen");
  for (const auto& r : ranges) {
    if (!(r.step > 0.0)) throw InvalidArgument("adr step for '" + r.event + "' must be > 0");
    if (r.maximal.first > r.initial.first || r.maximal.second < r.initial.second) {
      throw InvalidArgument("adr initial range of '" + r.event + "' exceeds its maximal range");
    }
    if (r.current.first < r.maximal.first || r.current.second > r.maximal.second) {
      throw InvalidArgument("adr range of '" + r.event + "' left its maximal bounds");
    }
  }
}

AdrState adr_update(AdrState state, double performance) {
  state.validate();
  for (auto& r : state.ranges) {
    if (performance >= state.widen_threshold) {
      r.current.first = std::max(r.current.first - r.step, r.maximal.first);
      r.current.second = std::min(r.current.second + r.step, r.maximal.second);
    } else if (performance <= state.narrow_threshold) {
      r.current.first = std::min(r.current.first + r.step, r.initial.first);
      r.current.second = std::max(r.current.second - r.step, r.initial.second);
    }
  }
  return state;
}

// ---------------------------------------------------------------------------
// Term library

void TermLibrary::merge(const TermLibrary& other) {
  auto add = [](auto& into, const auto& from, const char* kind) {
    for (const auto& [k, v] : from) {
      if (!into.emplace(k, v).second) {
        throw InvalidArgument(std::string("duplicate ") + kind + " function '" + k + "'");
      }
    }
  };
  add(observations, other.observations, "observation");
  add(rewards, other.rewards, "reward");
  add(terminations, other.terminations, "termination");
  add(actions, other.actions, "action");
  add(curriculum, other.curriculum, "curriculum");
}

// ---------------------------------------------------------------------------
// ManagerEnv

ManagerEnv::ManagerEnv(const EnvConfig& config, SceneSpec scene_spec, const TermLibrary& library)
    : EnvBase(config.settings, std::move(scene_spec)) {
  const auto& m = config.managers;
  const Scene& sc = scene();
  const int n = env_count();

  for (const auto& a : m.actions) {
    auto term = bind_term(lookup(library.actions, a.function, "action"), a, sc, "action");
    action_dim_ += term->dim();
    action_terms_.push_back(std::move(term));
  }
  actions_ = MatX::Zero(n, action_dim_);
  previous_actions_ = MatX::Zero(n, action_dim_);
  terminated_now_.assign(static_cast<std::size_t>(n), 0);

  for (const auto& [group, terms] : m.observations) {
    auto& out = observation_groups_[group];
    for (const auto& t : terms) {
      out.push_back({t, bind_term(lookup(library.observations, t.function, "observation"), t, sc, "observation")});
    }
  }
  for (const auto& r : m.rewards) {
    reward_terms_.push_back(
        {r, bind_term(lookup(library.rewards, r.function, "reward"), r, sc, "reward"), VecX::Zero(n)});
  }
  for (const auto& t : m.terminations) {
    termination_terms_.push_back(
        {t, bind_term(lookup(library.terminations, t.function, "termination"), t, sc, "termination")});
  }
  for (const auto& c : m.curriculum) {
    curriculum_terms_.push_back(bind_term(lookup(library.curriculum, c.function, "curriculum"), c, sc, "curriculum"));
  }
  for (const auto& c : m.commands) {
    const auto dims = static_cast<Eigen::Index>(c.ranges.size());
    command_terms_.push_back({c, MatX::Zero(n, dims), VecX::Zero(n), 0});
  }

  const auto& robot = sc.robot();
  for (const auto& spec : m.events) {
    EventTerm term{spec, {}, {}, VecX::Zero(n), 0};
    const std::string where = "event '" + spec.name + "'";
    try {
      term.envs = sc.registry().create_view(spec.asset).env_indices();
    } catch (const EmptyViewError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    std::sort(term.envs.begin(), term.envs.end());
    const auto& p = spec.parameter;
    auto resolve = [&](auto fn) {
      for (const auto& name : spec.targets) {
        try {
          fn(name);
        } catch (const InvalidArgument& e) {
          throw ConfigError(where + ": " + e.what());
        }
      }
    };
    if (p == "mass") {
      resolve([&](const std::string& name) { term.targets.push_back(robot.tree.find_link(name)); });
      if (spec.targets.empty()) {
        for (int l = 0; l < robot.tree.link_count(); ++l) term.targets.push_back(l);
      }
    } else if (p == "friction") {
      std::vector<int> links;
      resolve([&](const std::string& name) { links.push_back(robot.tree.find_link(name)); });
      for (std::size_t i = 0; i < robot.probes.probes.size(); ++i) {
        const int link = robot.probes.probes[i].link;
        if (links.empty() || std::find(links.begin(), links.end(), link) != links.end()) {
          term.targets.push_back(static_cast<int>(i));
        }
      }
    } else if (p == "gains") {
      resolve([&](const std::string& name) { term.targets.push_back(sc.find_actuator(name)); });
      if (spec.targets.empty()) {
        for (std::size_t g = 0; g < sc.actuators().size(); ++g) term.targets.push_back(static_cast<int>(g));
      }
    } else if (p == "push_velocity" || p == "default_joint_pos" || p == "joint_pos" || p == "joint_vel") {
      resolve([&](const std::string& name) { term.targets.push_back(sc.find_joint(name)); });
      if (spec.targets.empty()) {
        if (p == "push_velocity" && !robot.tree.floating()) {
          throw ConfigError(where + ": push_velocity on a fixed-base robot needs joint targets");
        }
        if (p != "push_velocity") {
          for (int j = 0; j < robot.tree.dof(); ++j) term.targets.push_back(j);
        }
      }
    } else if (p == "gravity") {
      if (!spec.targets.empty()) throw ConfigError(where + ": gravity takes no targets");
    } else {
      throw ConfigError(where + ": unknown parameter '" + p + "'");
    }
    if (spec.mode == EventMode::kInterval) {
      for (int e = 0; e < n; ++e) {
        term.time_left(e) = std::uniform_real_distribution<double>(spec.interval.first, spec.interval.second)(rng(e));
      }
    }
    event_terms_.push_back(std::move(term));
  }

  if (m.adr) {
    adr_ = AdrState::from_spec(*m.adr);
    for (const auto& r : adr_->ranges) {
      try {
        set_event_range(r.event, r.current);
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("adr: ") + e.what());
      }
    }
  }

  std::vector<int> all(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e) all[static_cast<std::size_t>(e)] = e;
  for (auto& term : event_terms_) {
    if (term.spec.mode == EventMode::kStartup) fire(term, all, nullptr);
  }
}

ManagerEnv::~ManagerEnv() = default;

ManagerEnv::EventTerm& ManagerEnv::find_event(const std::string& name) {
  for (auto& t : event_terms_) {
    if (t.spec.name == name) return t;
  }
  throw InvalidArgument("no event named '" + name + "'");
}

const ManagerEnv::EventTerm& ManagerEnv::find_event(const std::string& name) const {
  return const_cast<ManagerEnv*>(this)->find_event(name);
}

const ManagerEnv::CommandTerm& ManagerEnv::find_command(const std::string& name) const {
  for (const auto& t : command_terms_) {
    if (t.spec.name == name) return t;
  }
  throw InvalidArgument("no command named '" + name + "'");
}

const MatX& ManagerEnv::command(const std::string& name) const { return find_command(name).values; }

std::int64_t ManagerEnv::command_resamples(const std::string& name) const { return find_command(name).resamples; }

const EventTermSpec& ManagerEnv::event(const std::string& name) const { return find_event(name).spec; }

void ManagerEnv::set_event_range(const std::string& name, Range range) {
  auto& term = find_event(name);
  EventTermSpec updated = term.spec;
  updated.range = range;
  updated.validate();
  term.spec = updated;
}

void ManagerEnv::apply_event(const std::string& name, std::span<const int> env_ids) {
  fire(find_event(name), env_ids, nullptr);
}

std::int64_t ManagerEnv::event_fire_count(const std::string& name) const { return find_event(name).fired; }

void ManagerEnv::update_adr(double performance) {
  if (!adr_) throw InvalidArgument("environment has no adr configuration");
  adr_ = adr_update(*adr_, performance);
  for (const auto& r : adr_->ranges) set_event_range(r.event, r.current);
}

const VecX& ManagerEnv::episode_sum(const std::string& reward_term) const {
  for (const auto& t : reward_terms_) {
    if (t.spec.name == reward_term) return t.episode;
  }
  throw InvalidArgument("no reward term named '" + reward_term + "'");
}

void ManagerEnv::fire(EventTerm& term, std::span<const int> env_ids, std::vector<dyn::ArticulationState>* staged) {
  Scene& sc = scene();
  const auto& spec = term.spec;
  const auto& p = spec.parameter;
  const auto& robot = sc.robot();
  for (std::size_t k = 0; k < env_ids.size(); ++k) {
    const int e = env_ids[k];
    if (!std::binary_search(term.envs.begin(), term.envs.end(), e)) continue;
    auto& g = rng(e);
    auto draw = [&] { return sample(g, spec.distribution, spec.range); };

    if (p == "mass") {
      for (const int l : term.targets) sc.set_link_mass(e, l, apply_op(spec.op, robot.tree.link(l).mass, draw()));
    } else if (p == "friction") {
      for (const int i : term.targets) {
        const auto u = static_cast<std::size_t>(i);
        const double f = apply_op(spec.op, robot.probes.probes[u].friction, draw());
        if (!(f >= 0.0)) throw InvalidArgument("event '" + spec.name + "' produced negative friction");
        sc.probes(e).probes[u].friction = f;
      }
    } else if (p == "gains") {
      for (const int gi : term.targets) {
        auto& group = sc.actuators()[static_cast<std::size_t>(gi)];
        const double kp = apply_op(spec.op, group.default_gains().stiffness, draw());
        const double kd = apply_op(spec.op, group.default_gains().damping, draw());
        group.set_gains(e, {kp, kd});
      }
    } else if (p == "default_joint_pos") {
      VecX q = sc.default_q(e);
      for (const int j : term.targets) q(j) = apply_op(spec.op, robot.default_q(j), draw());
      sc.set_default_q(e, q);
    } else if (p == "gravity") {
      Vec3 gv = sc.gravity(e);
      gv.z() = apply_op(spec.op, dyn::kDefaultGravity.z(), draw());
      sc.set_gravity(e, gv);
    } else if (is_state_parameter(p)) {
      dyn::ArticulationState local;
      dyn::ArticulationState* st = nullptr;
      if (staged) {
        st = &(*staged)[k];
      } else {
        local = sc.state(e);
        st = &local;
      }
      if (p == "joint_pos") {
        for (const int j : term.targets) st->q(j) = apply_op(spec.op, sc.default_q(e)(j), draw());
      } else if (p == "joint_vel") {
        for (const int j : term.targets) st->qd(j) = apply_op(spec.op, 0.0, draw());
      } else if (term.targets.empty()) {
        st->root_lin_vel.x() = apply_op(spec.op, st->root_lin_vel.x(), draw());
        st->root_lin_vel.y() = apply_op(spec.op, st->root_lin_vel.y(), draw());
      } else {
        for (const int j : term.targets) st->qd(j) = apply_op(spec.op, st->qd(j), draw());
      }
      if (!staged) sc.write_state(e, local);
    } else {
      throw InvalidArgument("unknown event parameter '" + p + "'");
    }
  }
  ++term.fired;
}

void ManagerEnv::process_actions(const MatX& actions) {
  previous_actions_ = actions_;
  actions_ = actions;
  Eigen::Index offset = 0;
  for (auto& term : action_terms_) {
    term->process(*this, actions.middleCols(offset, term->dim()));
    offset += term->dim();
  }
}

void ManagerEnv::apply_actions() {
  for (auto& term : action_terms_) term->apply(*this);
}

void ManagerEnv::compute_terminations(Flags& terminated, Extras& extras) {
  const int n = env_count();
  for (auto& term : termination_terms_) {
    const Flags f = term.fn(*this);
    if (static_cast<int>(f.size()) != n) {
      throw Error("termination term '" + term.spec.name + "' returned " + std::to_string(f.size()) + " flags");
    }
    VecX cause(n);
    for (int e = 0; e < n; ++e) {
      const auto u = static_cast<std::size_t>(e);
      cause(e) = f[u] ? 1.0 : 0.0;
      terminated[u] = static_cast<std::uint8_t>(terminated[u] | (f[u] ? 1 : 0));
    }
    extras["termination/" + term.spec.name] = cause;
  }
  terminated_now_ = terminated;
}

void ManagerEnv::compute_rewards(VecX& reward, Extras& extras) {
  const double dt = env_dt();
  for (auto& term : reward_terms_) {
    const VecX value = term.fn(*this);
    if (value.size() != env_count()) {
      throw Error("reward term '" + term.spec.name + "' returned " + std::to_string(value.size()) + " values");
    }
    const VecX contribution = (term.spec.weight * value.array() * dt).matrix();
    reward += contribution;
    term.episode += contribution;
    extras["reward/" + term.spec.name] = contribution;
    extras["episode/" + term.spec.name] = term.episode;
  }
}

void ManagerEnv::reset_curriculum(std::span<const int> env_ids) {
  for (auto& fn : curriculum_terms_) fn(*this, env_ids);
}

void ManagerEnv::reset_events(std::span<const int> env_ids, std::vector<dyn::ArticulationState>& staged) {
  for (auto& term : event_terms_) {
    if (term.spec.mode == EventMode::kReset) fire(term, env_ids, &staged);
  }
}

void ManagerEnv::reset_buffers(std::span<const int> env_ids) {
  for (const int e : env_ids) {
    actions_.row(e).setZero();
    previous_actions_.row(e).setZero();
    for (auto& term : reward_terms_) term.episode(e) = 0.0;
  }
  for (auto& term : action_terms_) term->reset(*this, env_ids);
}

void ManagerEnv::resample_command(CommandTerm& term, int env) {
  auto& g = rng(env);
  for (std::size_t c = 0; c < term.spec.ranges.size(); ++c) {
    const auto& r = term.spec.ranges[c];
    term.values(env, static_cast<Eigen::Index>(c)) = std::uniform_real_distribution<double>(r.first, r.second)(g);
  }
  term.timers(env) =
      std::uniform_real_distribution<double>(term.spec.resampling_time.first, term.spec.resampling_time.second)(g);
  ++term.resamples;
}

void ManagerEnv::update_commands(std::span<const int> reset_ids, double elapsed) {
  const int n = env_count();
  std::vector<std::uint8_t> was_reset(static_cast<std::size_t>(n), 0);
  for (const int e : reset_ids) was_reset[static_cast<std::size_t>(e)] = 1;
  for (auto& term : command_terms_) {
    for (int e = 0; e < n; ++e) {
      if (!was_reset[static_cast<std::size_t>(e)]) {
        if (elapsed <= 0.0) continue;
        term.timers(e) -= elapsed;
        if (term.timers(e) > 1e-12) continue;
      }
      resample_command(term, e);
    }
  }
}

void ManagerEnv::interval_events() {
  const int n = env_count();
  for (auto& term : event_terms_) {
    if (term.spec.mode != EventMode::kInterval) continue;
    std::vector<int> due;
    for (int e = 0; e < n; ++e) {
      term.time_left(e) -= env_dt();
      if (term.time_left(e) <= 1e-12) due.push_back(e);
    }
    if (due.empty()) continue;
    fire(term, due, nullptr);
    for (const int e : due) {
      term.time_left(e) =
          std::uniform_real_distribution<double>(term.spec.interval.first, term.spec.interval.second)(rng(e));
    }
  }
}

ObsGroups ManagerEnv::compute_observations() {
  ObsGroups out;
  const int n = env_count();
  for (auto& [group, terms] : observation_groups_) {
    std::vector<MatX> blocks;
    Eigen::Index cols = 0;
    for (auto& term : terms) {
      MatX v = term.fn(*this);
      if (v.rows() != n) {
        throw Error("observation term '" + term.spec.name + "' returned " + std::to_string(v.rows()) + " rows");
      }
      const auto& noise = term.spec.noise;
      if (noise.kind != NoiseKind::kNone && noise.magnitude > 0.0) {
        for (int e = 0; e < n; ++e) {
          auto& g = rng(e);
          for (Eigen::Index c = 0; c < v.cols(); ++c) {
            if (noise.kind == NoiseKind::kGaussian) {
              v(e, c) += std::normal_distribution<double>(0.0, noise.magnitude)(g);
            } else {
              v(e, c) += std::uniform_real_distribution<double>(-noise.magnitude, noise.magnitude)(g);
            }
          }
        }
      }
      if (term.spec.clip) v = v.cwiseMax(term.spec.clip->first).cwiseMin(term.spec.clip->second);
      v *= term.spec.scale;
      cols += v.cols();
      blocks.push_back(std::move(v));
    }
    MatX obs(n, cols);
    Eigen::Index c = 0;
    for (const auto& b : blocks) {
      obs.middleCols(c, b.cols()) = b;
      c += b.cols();
    }
    out[group] = std::move(obs);
  }
  return out;
}

}  // namespace batchlab::env
