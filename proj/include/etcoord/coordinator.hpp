#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "etcoord/dynamics.hpp"

namespace etcoord {

/// How the supervisor obtains grad g: by measuring it physically, or by
/// gathering every agent's state and evaluating it.
enum class CoordinationMode { SensingBased, ComputationBased };

constexpr std::string_view to_string(CoordinationMode mode) {
  return mode == CoordinationMode::SensingBased ? "sensing" : "computation";
}

inline std::optional<CoordinationMode> parse_coordination_mode(std::string_view name) {
  if (name == "sensing") return CoordinationMode::SensingBased;
  if (name == "computation") return CoordinationMode::ComputationBased;
  return std::nullopt;
}

enum class EventCause { Initial, Trigger, Disturbance };

constexpr std::string_view to_string(EventCause cause) {
  switch (cause) {
    case EventCause::Initial: return "initial";
    case EventCause::Trigger: return "trigger";
    case EventCause::Disturbance: return "disturbance";
  }
  return "?";
}

template <typename Scalar>
struct EventRecord {
  Scalar time = 0;
  std::int64_t k = 0;
  std::vector<Index> initiators;  // 0-based agent indices
  std::int64_t messages_up = 0;
  std::int64_t messages_down = 0;
  EventCause cause = EventCause::Trigger;
  SupervisorSnapshot<Scalar> snapshot;
};

template <typename Scalar>
using EventLog = std::vector<EventRecord<Scalar>>;

struct MessageCounts {
  std::int64_t up = 0;
  std::int64_t down = 0;
};

/// Requests travel up; the broadcast goes to all n agents. In computation
/// mode the supervisor also gathers all n states.
inline MessageCounts message_counts(CoordinationMode mode, Index n, std::size_t initiators) {
  const auto requests = static_cast<std::int64_t>(initiators);
  const auto gather = mode == CoordinationMode::ComputationBased ? static_cast<std::int64_t>(n) : 0;
  return {requests + gather, static_cast<std::int64_t>(n)};
}

/// Supervisor side of the protocol. Owns the current snapshot and the event
/// log; the single serialization point of a run.
template <typename Scalar>
class Coordinator {
 public:
  Coordinator(const NetworkProblem<Scalar>& p, CoordinationMode mode, Scalar t0, const Vector<Scalar>& x0)
      : mode_(mode), n_(p.size()) {
    refresh(p, t0, x0, {}, EventCause::Initial);
  }

  CoordinationMode mode() const { return mode_; }
  const SupervisorSnapshot<Scalar>& snapshot() const { return log_.back().snapshot; }
  const EventLog<Scalar>& log() const { return log_; }

  /// One synchronous decision: any request collapses into a single event.
  std::optional<EventRecord<Scalar>> process_step(const NetworkProblem<Scalar>& p, Scalar t, const Vector<Scalar>& x,
                                                  const std::vector<bool>& requests) {
    std::vector<Index> initiators = collect(requests);
    if (initiators.empty()) return std::nullopt;
    return refresh(p, t, x, std::move(initiators), EventCause::Trigger);
  }

  /// Unconditional refresh, e.g. after the coupling itself changed.
  EventRecord<Scalar> force_refresh(const NetworkProblem<Scalar>& p, Scalar t, const Vector<Scalar>& x,
                                    const std::vector<bool>& requests, EventCause cause) {
    return refresh(p, t, x, collect(requests), cause);
  }

 private:
  std::vector<Index> collect(const std::vector<bool>& requests) const {
    require_dimension(static_cast<Index>(requests.size()), n_, "requests");
    std::vector<Index> out;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      if (requests[i]) out.push_back(static_cast<Index>(i));
    }
    return out;
  }

  EventRecord<Scalar> refresh(const NetworkProblem<Scalar>& p, Scalar t, const Vector<Scalar>& x,
                              std::vector<Index> initiators, EventCause cause) {
    if (!log_.empty() && !(t > log_.back().time)) throw DomainError("event times must strictly increase");
    const auto k = static_cast<std::int64_t>(log_.size());
    const auto counts = message_counts(mode_, n_, initiators.size());
    EventRecord<Scalar> rec{t, k, std::move(initiators), counts.up, counts.down, cause, make_snapshot(p, x, t, k)};
    log_.push_back(rec);
    return rec;
  }

  CoordinationMode mode_;
  Index n_;
  EventLog<Scalar> log_;
};

template <typename Scalar>
struct InterEventStats {
  Scalar min = 0;
  Scalar mean = 0;
  Scalar stddev = 0;  // population
};

template <typename Scalar>
struct MessageStats {
  std::int64_t total_events = 0;  // including the initial broadcast
  std::int64_t trigger_events = 0;
  std::int64_t messages_up = 0;
  std::int64_t messages_down = 0;
  std::vector<std::int64_t> initiations_per_agent;
  std::optional<InterEventStats<Scalar>> inter_event;
  /// Same statistics restricted to gaps that end in a trigger event, so
  /// refreshes forced by disturbances do not mask the trigger's behavior.
  std::optional<InterEventStats<Scalar>> triggered_inter_event;
  Scalar horizon = 0;

  /// Snapshot refreshes after the initial broadcast.
  std::int64_t updates() const { return total_events > 0 ? total_events - 1 : 0; }
};

template <typename Scalar>
std::vector<Scalar> inter_event_gaps(const EventLog<Scalar>& records) {
  std::vector<Scalar> gaps;
  for (std::size_t i = 1; i < records.size(); ++i) gaps.push_back(records[i].time - records[i - 1].time);
  return gaps;
}

/// Gaps whose closing event has the given cause.
template <typename Scalar>
std::vector<Scalar> inter_event_gaps(const EventLog<Scalar>& records, EventCause closing) {
  std::vector<Scalar> gaps;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].cause == closing) gaps.push_back(records[i].time - records[i - 1].time);
  }
  return gaps;
}

namespace detail {

template <typename Scalar>
std::optional<InterEventStats<Scalar>> gap_stats(const std::vector<Scalar>& gaps) {
  if (gaps.empty()) return std::nullopt;
  InterEventStats<Scalar> ie;
  ie.min = gaps.front();
  Scalar sum = 0;
  for (Scalar g : gaps) {
    ie.min = std::min(ie.min, g);
    sum += g;
  }
  ie.mean = sum / static_cast<Scalar>(gaps.size());
  Scalar ss = 0;
  for (Scalar g : gaps) ss += (g - ie.mean) * (g - ie.mean);
  ie.stddev = std::sqrt(ss / static_cast<Scalar>(gaps.size()));
  return ie;
}

}  // namespace detail

template <typename Scalar>
MessageStats<Scalar> summarize(const EventLog<Scalar>& records, Scalar horizon) {
  MessageStats<Scalar> stats;
  stats.horizon = horizon;
  if (!records.empty()) {
    stats.initiations_per_agent.assign(static_cast<std::size_t>(records.front().snapshot.anchor_state.size()), 0);
  }
  for (const auto& r : records) {
    ++stats.total_events;
    if (r.cause == EventCause::Trigger) ++stats.trigger_events;
    stats.messages_up += r.messages_up;
    stats.messages_down += r.messages_down;
    for (Index i : r.initiators) ++stats.initiations_per_agent.at(static_cast<std::size_t>(i));
  }
  stats.inter_event = detail::gap_stats(inter_event_gaps(records));
  stats.triggered_inter_event = detail::gap_stats(inter_event_gaps(records, EventCause::Trigger));
  return stats;
}

}  // namespace etcoord
