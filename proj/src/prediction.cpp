#include "crowdnav/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

namespace crowdnav {

using nlohmann::json;

std::vector<std::vector<Vec2>> SampleSet::positions_at(int step) const {
  std::vector<std::vector<Vec2>> out(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    out[s].resize(static_cast<std::size_t>(num_humans()));
    for (int j = 0; j < num_humans(); ++j) out[s][static_cast<std::size_t>(j)] = samples[s].at(j, step);
  }
  return out;
}

void SampleSet::validate() const {
  if (samples.empty()) throw DimensionError("SampleSet: empty");
  const int n = samples.front().num_humans;
  const int t = samples.front().horizon;
  if (t < 1 || n < 0) throw DimensionError("SampleSet: bad shape");
  for (const auto& s : samples) {
    if (s.num_humans != n || s.horizon != t) throw DimensionError("SampleSet: inconsistent shapes");
    for (const auto& p : s.positions) {
      if (!is_finite(p)) throw InvalidStateError("SampleSet: non-finite position");
    }
  }
}

void HistoryWindow::push_human(int index, double stamp, const Vec2& position) {
  while (static_cast<int>(humans.size()) <= index) {
    humans.push_back(AgentTrack{static_cast<int>(humans.size()), {}, {}});
  }
  AgentTrack& track = humans[static_cast<std::size_t>(index)];
  if (!track.stamps.empty() && stamp <= track.stamps.back()) {
    throw InvalidStateError("HistoryWindow: stamps must be strictly increasing");
  }
  track.stamps.push_back(stamp);
  track.positions.push_back(position);
  while (!track.stamps.empty() && stamp - track.stamps.front() > max_span + 1e-9) {
    track.stamps.erase(track.stamps.begin());
    track.positions.erase(track.positions.begin());
  }
}

void HistoryWindow::push_robot(double stamp, const Vec2& position, double heading) {
  if (!robot.empty() && stamp <= robot.back().stamp) {
    throw InvalidStateError("HistoryWindow: stamps must be strictly increasing");
  }
  robot.push_back({stamp, position, heading});
  while (!robot.empty() && stamp - robot.front().stamp > max_span + 1e-9) {
    robot.erase(robot.begin());
  }
}

Vec2 HistoryWindow::human_velocity(int index) const {
  const AgentTrack& track = humans.at(static_cast<std::size_t>(index));
  const std::size_t n = track.positions.size();
  if (n < 2) return {0.0, 0.0};  // insufficient history: assume the human holds still
  const double dt_obs = track.stamps[n - 1] - track.stamps[n - 2];
  return (track.positions[n - 1] - track.positions[n - 2]) / dt_obs;
}

namespace {

SampleSet constant_velocity_rollout(const HistoryWindow& history, int horizon, int num_samples) {
  if (horizon < 1 || num_samples < 1) throw DimensionError("predict: horizon and num_samples must be >= 1");
  const int n = static_cast<int>(history.humans.size());
  TrajectorySample sample(n, horizon);
  for (int j = 0; j < n; ++j) {
    const auto& track = history.humans[static_cast<std::size_t>(j)];
    const Vec2 pos = track.positions.empty() ? Vec2{0.0, 0.0} : track.positions.back();
    const Vec2 vel = history.human_velocity(j);
    for (int k = 0; k < horizon; ++k) {
      sample.at(j, k) = pos + vel * (history.dt * static_cast<double>(k + 1));
    }
  }
  SampleSet set;
  set.dt = history.dt;
  set.stamp = history.robot.empty() ? (history.humans.empty() || history.humans.front().stamps.empty()
                                           ? 0.0
                                           : history.humans.front().stamps.back())
                                    : history.robot.back().stamp;
  set.samples.assign(static_cast<std::size_t>(num_samples), sample);
  return set;
}

}  // namespace

SampleSet cvg_predict(const HistoryWindow& history, int horizon, int num_samples) {
  return constant_velocity_rollout(history, horizon, num_samples);
}

SampleSet cvmm_predict(const HistoryWindow& history, int horizon, int num_samples) {
  return constant_velocity_rollout(history, horizon, num_samples);
}

SampleSet mixture_predict(const HistoryWindow& history, int horizon, int num_samples,
                          const std::vector<MixtureMode>& modes, double noise_scale,
                          std::uint64_t seed) {
  if (modes.empty()) throw ConfigError("mixture_predict: empty mode list");
  double psum = 0.0;
  for (const auto& mode : modes) {
    if (mode.probability < 0.0) throw ConfigError("mixture_predict: negative mode probability");
    psum += mode.probability;
  }
  if (std::abs(psum - 1.0) > 1e-9) throw ConfigError("mixture_predict: mode probabilities must sum to 1");
  if (horizon < 1 || num_samples < 1) throw DimensionError("predict: horizon and num_samples must be >= 1");

  const int n = static_cast<int>(history.humans.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SampleSet set;
  set.dt = history.dt;
  set.stamp = history.robot.empty() ? 0.0 : history.robot.back().stamp;
  set.samples.reserve(static_cast<std::size_t>(num_samples));

  for (int s = 0; s < num_samples; ++s) {
    TrajectorySample sample(n, horizon);
    for (int j = 0; j < n; ++j) {
      const auto& track = history.humans[static_cast<std::size_t>(j)];
      const Vec2 pos0 = track.positions.empty() ? Vec2{0.0, 0.0} : track.positions.back();
      const Vec2 vel = history.human_velocity(j);
      const double speed = norm(vel);
      const double heading0 = speed > 1e-12 ? std::atan2(vel.y, vel.x) : 0.0;

      // categorical mode draw
      double u = unif(rng);
      std::size_t pick = 0;
      for (std::size_t mi = 0; mi < modes.size(); ++mi) {
        if (modes[mi].probability <= 0.0) continue;
        if (u <= modes[mi].probability) {
          pick = mi;
          break;
        }
        u -= modes[mi].probability;
        pick = mi;
      }
      const double bearing = modes[pick].bearing;

      Vec2 pos = pos0;
      for (int k = 0; k < horizon; ++k) {
        const double blend = static_cast<double>(k + 1) / static_cast<double>(horizon);
        const double heading = heading0 + blend * bearing;
        pos += Vec2{std::cos(heading), std::sin(heading)} * (speed * history.dt);
        Vec2 noisy = pos;
        if (noise_scale > 0.0) {
          const double sigma = noise_scale * std::sqrt(history.dt * static_cast<double>(k + 1));
          noisy += Vec2{gauss(rng) * sigma, gauss(rng) * sigma};
        }
        sample.at(j, k) = noisy;
      }
    }
    set.samples.push_back(std::move(sample));
  }
  return set;
}

std::string encode_prediction_request(const HistoryWindow& history, int horizon, int num_samples) {
  json req;
  req["dt"] = history.dt;
  req["horizon"] = horizon;
  req["num_samples"] = num_samples;
  req["agents"] = json::array();
  for (const auto& track : history.humans) {
    json agent;
    agent["id"] = track.id;
    json hist = json::array();
    for (std::size_t i = 0; i < track.stamps.size(); ++i) {
      hist.push_back({track.stamps[i], track.positions[i].x, track.positions[i].y});
    }
    agent["history"] = hist;
    req["agents"].push_back(agent);
  }
  json rob = json::array();
  for (const auto& p : history.robot) rob.push_back({p.stamp, p.position.x, p.position.y, p.heading});
  req["robot_history"] = rob;
  return req.dump();
}

SampleSet decode_prediction_response(const std::string& line, int horizon, int num_samples,
                                     int num_humans, double dt) {
  json resp;
  try {
    resp = json::parse(line);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("prediction response is not valid JSON: ") + e.what());
  }
  if (!resp.contains("samples") || !resp["samples"].is_array()) {
    throw ProtocolError("prediction response missing 'samples' array");
  }
  const auto& arr = resp["samples"];
  if (static_cast<int>(arr.size()) != num_samples) throw ProtocolError("prediction response: wrong sample count");

  SampleSet set;
  set.dt = dt;
  set.samples.reserve(arr.size());
  for (const auto& sample_json : arr) {
    if (static_cast<int>(sample_json.size()) != num_humans) {
      throw ProtocolError("prediction response: wrong agent count");
    }
    TrajectorySample sample(num_humans, horizon);
    for (int j = 0; j < num_humans; ++j) {
      const auto& traj = sample_json.at(static_cast<std::size_t>(j));
      if (static_cast<int>(traj.size()) != horizon) throw ProtocolError("prediction response: wrong horizon");
      for (int k = 0; k < horizon; ++k) {
        const auto& pt = traj.at(static_cast<std::size_t>(k));
        if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
          throw ProtocolError("prediction response: position must be [x, y]");
        }
        const Vec2 p{pt[0].get<double>(), pt[1].get<double>()};
        if (!is_finite(p)) throw ProtocolError("prediction response: non-finite position");
        sample.at(j, k) = p;
      }
    }
    set.samples.push_back(std::move(sample));
  }
  return set;
}

namespace {

// Per-sample log kernel sums over the flattened joint trajectories; the core
// of kde_init_weights, shared by the serial and parallel paths.
void kde_log_densities(const std::vector<std::vector<double>>& flat,
                       const std::vector<double>& inv_bandwidth, bool parallel,
                       std::vector<double>& log_density) {
  const int S = static_cast<int>(flat.size());
  const std::size_t d = flat.front().size();
  log_density.assign(static_cast<std::size_t>(S), 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
  for (int s = 0; s < S; ++s) {
    // leave-one-out log-sum-exp over the other samples
    std::vector<double> log_kernel;
    log_kernel.reserve(static_cast<std::size_t>(S - 1));
    double lmax = -std::numeric_limits<double>::infinity();
    for (int o = 0; o < S; ++o) {
      if (o == s) continue;
      double q = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double z = (flat[static_cast<std::size_t>(s)][k] - flat[static_cast<std::size_t>(o)][k]) *
                         inv_bandwidth[k];
        q += z * z;
      }
      const double lk = -0.5 * q;
      log_kernel.push_back(lk);
      lmax = std::max(lmax, lk);
    }
    double acc = 0.0;
    for (double lk : log_kernel) acc += std::exp(lk - lmax);
    log_density[static_cast<std::size_t>(s)] = lmax + std::log(acc);
  }
}

}  // namespace

WeightVector kde_init_weights(const SampleSet& samples, BandwidthRule rule, Execution exec) {
  (void)rule;  // scott is the only implemented rule
  samples.validate();
  const int S = samples.num_samples();
  if (S < 2) throw DimensionError("kde_init_weights: need at least 2 samples");
  const std::size_t d = static_cast<std::size_t>(2 * samples.num_humans() * samples.horizon());
  if (d == 0) return WeightVector::uniform(static_cast<std::size_t>(S));

  std::vector<std::vector<double>> flat(static_cast<std::size_t>(S), std::vector<double>(d));
  for (int s = 0; s < S; ++s) {
    std::size_t k = 0;
    for (const auto& p : samples.samples[static_cast<std::size_t>(s)].positions) {
      flat[static_cast<std::size_t>(s)][k++] = p.x;
      flat[static_cast<std::size_t>(s)][k++] = p.y;
    }
  }

  // Scott's rule per dimension: h_k = S^(-1/(d+4)) * sigma_k. Dimensions with
  // zero spread carry no information and are skipped.
  const double factor = std::pow(static_cast<double>(S), -1.0 / (static_cast<double>(d) + 4.0));
  std::vector<double> inv_bandwidth(d, 0.0);
  bool any_dim = false;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0.0;
    for (int s = 0; s < S; ++s) mean += flat[static_cast<std::size_t>(s)][k];
    mean /= static_cast<double>(S);
    double var = 0.0;
    for (int s = 0; s < S; ++s) {
      const double c = flat[static_cast<std::size_t>(s)][k] - mean;
      var += c * c;
    }
    var /= static_cast<double>(S - 1);
    const double sigma = std::sqrt(var);
    if (sigma > 1e-12) {
      inv_bandwidth[k] = 1.0 / (factor * sigma);
      any_dim = true;
    }
  }
  if (!any_dim) return WeightVector::uniform(static_cast<std::size_t>(S));  // all samples identical

  std::vector<double> log_density;
  kde_log_densities(flat, inv_bandwidth, exec == Execution::parallel, log_density);

  const double lmax = *std::max_element(log_density.begin(), log_density.end());
  std::vector<double> mass(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) mass[static_cast<std::size_t>(s)] = std::exp(log_density[static_cast<std::size_t>(s)] - lmax);
  return WeightVector::from_unnormalized(std::move(mass));
}

}  // namespace crowdnav
