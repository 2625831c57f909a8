#include "etcoord/io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace etcoord::io {

namespace {

double number(const json& v, const char* what) {
  if (!v.is_number()) throw FormatError(std::string(what) + " must be a number");
  return v.get<double>();
}

std::vector<double> numbers(const json& v, const char* what) {
  if (!v.is_array()) throw FormatError(std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(number(e, what));
  return out;
}

Polynomial<double> polynomial(const json& v, const char* what) {
  return Polynomial<double>(numbers(v, what));
}

json poly_json(const LocalCost<double>& c) {
  const auto* poly = c.polynomial();
  if (poly == nullptr) throw FormatError("only polynomial costs can be serialized");
  json coeffs = json::array();
  for (double a : poly->coefficients()) coeffs.push_back(a);
  if (coeffs.empty()) coeffs.push_back(0.0);
  return coeffs;
}

CouplingCost<double> coupling_from_json(const json& c, Index n) {
  if (!c.is_object() || c.size() != 1) {
    throw FormatError("coupling must hold exactly one of \"quadratic\" or \"aggregator\"");
  }
  if (c.contains("quadratic")) {
    const auto& qd = c.at("quadratic");
    if (!qd.contains("Q") || !qd.at("Q").is_array()) throw FormatError("quadratic coupling needs a Q matrix");
    const auto& rows = qd.at("Q");
    if (static_cast<Index>(rows.size()) != n) throw DimensionError("Q must have n rows");
    Matrix<double> Q(n, n);
    for (Index r = 0; r < n; ++r) {
      const auto row = numbers(rows[static_cast<std::size_t>(r)], "Q row");
      if (static_cast<Index>(row.size()) != n) throw DimensionError("Q must be n x n");
      for (Index col = 0; col < n; ++col) Q(r, col) = row[static_cast<std::size_t>(col)];
    }
    Vector<double> q = Vector<double>::Zero(n);
    if (qd.contains("q")) {
      const auto qv = numbers(qd.at("q"), "q");
      if (static_cast<Index>(qv.size()) != n) throw DimensionError("q must have n entries");
      for (Index i = 0; i < n; ++i) q(i) = qv[static_cast<std::size_t>(i)];
    }
    return CouplingCost<double>(QuadraticCoupling<double>{std::move(Q), std::move(q)});
  }
  if (c.contains("aggregator")) {
    const auto& ag = c.at("aggregator");
    if (!ag.contains("f0_poly")) throw FormatError("aggregator coupling needs f0_poly");
    if (!ag.contains("c")) throw FormatError("aggregator coupling needs c");
    return CouplingCost<double>(
        AggregatorCoupling<double>{LocalCost<double>(polynomial(ag.at("f0_poly"), "f0_poly")), number(ag.at("c"), "c")});
  }
  throw FormatError("unknown coupling kind");
}

}  // namespace

Problem problem_from_json(const json& doc) {
  if (!doc.is_object()) throw FormatError("problem document must be a JSON object");
  if (!doc.contains("n") || !doc.at("n").is_number_integer()) throw FormatError("\"n\" must be an integer");
  const auto n = doc.at("n").get<Index>();
  if (n < 1) throw FormatError("\"n\" must be at least 1");
  if (!doc.contains("costs") || !doc.at("costs").is_array()) throw FormatError("\"costs\" must be an array");
  const auto& costs_json = doc.at("costs");
  if (static_cast<Index>(costs_json.size()) != n) throw DimensionError("\"costs\" must have n entries");
  std::vector<LocalCost<double>> costs;
  for (const auto& c : costs_json) {
    if (!c.is_object() || !c.contains("poly")) throw FormatError("each cost needs a \"poly\" coefficient list");
    costs.emplace_back(polynomial(c.at("poly"), "poly"));
  }
  if (!doc.contains("coupling")) throw FormatError("missing \"coupling\"");
  auto coupling = coupling_from_json(doc.at("coupling"), n);

  std::optional<Boxes<double>> boxes;
  if (doc.contains("boxes") && !doc.at("boxes").is_null()) {
    const auto& bj = doc.at("boxes");
    if (!bj.is_array()) throw FormatError("\"boxes\" must be an array or null");
    if (static_cast<Index>(bj.size()) != n) throw DimensionError("\"boxes\" must have n entries");
    boxes.emplace();
    for (const auto& b : bj) {
      const auto pair = numbers(b, "box");
      if (pair.size() != 2) throw FormatError("each box is [lo, hi]");
      boxes->push_back({pair[0], pair[1]});
    }
  }
  return Problem(std::move(costs), std::move(coupling), std::move(boxes));
}

json problem_to_json(const Problem& p) {
  json doc;
  doc["n"] = p.size();
  json costs = json::array();
  for (const auto& c : p.costs()) costs.push_back({{"poly", poly_json(c)}});
  doc["costs"] = costs;
  if (const auto* qd = p.coupling().quadratic()) {
    json Q = json::array();
    for (Index r = 0; r < qd->Q.rows(); ++r) {
      json row = json::array();
      for (Index c = 0; c < qd->Q.cols(); ++c) row.push_back(qd->Q(r, c));
      Q.push_back(row);
    }
    json q = json::array();
    for (Index i = 0; i < qd->q.size(); ++i) q.push_back(qd->q(i));
    doc["coupling"] = {{"quadratic", {{"Q", Q}, {"q", q}}}};
  } else if (const auto* ag = p.coupling().aggregator()) {
    doc["coupling"] = {{"aggregator", {{"f0_poly", poly_json(ag->f0)}, {"c", ag->c}}}};
  }
  if (p.boxes()) {
    json boxes = json::array();
    for (const auto& b : *p.boxes()) boxes.push_back({b.lower, b.upper});
    doc["boxes"] = boxes;
  } else {
    doc["boxes"] = nullptr;
  }
  return doc;
}

ScenarioFile scenario_from_json(const json& doc) {
  ScenarioFile sc{problem_from_json(doc), {}, json::object(), json::object(), doc};
  if (doc.contains("disturbances")) {
    const auto& dj = doc.at("disturbances");
    if (!dj.is_array()) throw FormatError("\"disturbances\" must be an array");
    for (const auto& d : dj) {
      if (!d.is_object() || !d.contains("t") || !d.contains("dc")) {
        throw FormatError("each disturbance is {\"t\": real, \"dc\": real}");
      }
      sc.disturbances.push_back({number(d.at("t"), "t"), number(d.at("dc"), "dc")});
    }
    if (!sc.disturbances.empty() && sc.problem.coupling().aggregator() == nullptr) {
      throw FormatError("disturbances need an aggregator coupling");
    }
  }
  if (doc.contains("topology")) sc.topology = doc.at("topology");
  if (doc.contains("config")) {
    if (!doc.at("config").is_object()) throw FormatError("\"config\" must be an object");
    sc.config = doc.at("config");
  }
  return sc;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    return scenario_from_json(doc);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const DomainError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json power_scenario_json(const PowerScenario<double>& sc) {
  const auto built = build_power(sc);
  json doc = problem_to_json(built.problem);
  json dist = json::array();
  for (const auto& d : built.disturbances) dist.push_back({{"t", d.time}, {"dc", d.dc}});
  doc["disturbances"] = dist;
  doc["topology"] = {{"generators", sc.capacities.size()}, {"reactive_demand_mvar", sc.reactive_demand}};
  return doc;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trajectory_csv(std::ostream& os, const Trajectory<double>& traj) {
  const Index n = traj.empty() ? 0 : traj.states.front().size();
  os << "t";
  for (Index i = 1; i <= n; ++i) os << ",x_" << i;
  os << ",objective,feasible\n";
  for (std::size_t m = 0; m < traj.size(); ++m) {
    os << format_double(traj.times[m]);
    for (Index i = 0; i < n; ++i) os << ',' << format_double(traj.states[m](i));
    os << ',' << format_double(traj.objective[m]) << ',' << (traj.feasible[m] ? 1 : 0) << '\n';
  }
}

namespace {

std::string initiator_list(const std::vector<Index>& initiators) {
  std::string out;
  for (std::size_t j = 0; j < initiators.size(); ++j) {
    if (j > 0) out += ';';
    out += std::to_string(initiators[j] + 1);
  }
  return out;
}

json vector_json(const Vector<double>& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

void write_events_csv(std::ostream& os, const EventLog<double>& log) {
  os << "k,t,initiators,msgs_up,msgs_down\n";
  for (const auto& r : log) {
    os << r.k << ',' << format_double(r.time) << ',' << initiator_list(r.initiators) << ',' << r.messages_up << ','
       << r.messages_down << '\n';
  }
}

void write_histogram_csv(std::ostream& os, const Histogram<double>& hist) {
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    os << format_double(hist.edges[b]) << ',' << format_double(hist.edges[b + 1]) << ',' << hist.counts[b] << '\n';
  }
}

void write_compare_csv(std::ostream& os, const Trajectory<double>& event_run, const EventLog<double>& log,
                       const Trajectory<double>& continuous_run) {
  const Index n = event_run.empty() ? 0 : event_run.states.front().size();
  os << "row,t";
  for (Index i = 1; i <= n; ++i) os << ",event_x_" << i;
  for (Index i = 1; i <= n; ++i) os << ",continuous_x_" << i;
  os << ",k,initiators\n";

  const auto continuous_at = [&](std::size_t m) -> const Vector<double>* {
    if (continuous_run.empty()) return nullptr;
    return &continuous_run.states[std::min(m, continuous_run.size() - 1)];
  };
  const auto emit_states = [&](const Vector<double>& xe, const Vector<double>* xc) {
    for (Index i = 0; i < n; ++i) os << ',' << format_double(xe(i));
    for (Index i = 0; i < n; ++i) os << ',' << (xc != nullptr ? format_double((*xc)(i)) : std::string());
  };

  for (std::size_t m = 0; m < event_run.size(); ++m) {
    os << "sample," << format_double(event_run.times[m]);
    emit_states(event_run.states[m], continuous_at(m));
    os << ",,\n";
  }
  for (const auto& r : log) {
    os << "event," << format_double(r.time);
    // Sample index of the event on the shared grid.
    std::size_t m = 0;
    while (m + 1 < event_run.size() && event_run.times[m] < r.time) ++m;
    emit_states(r.snapshot.anchor_state, continuous_at(m));
    os << ',' << r.k << ',' << initiator_list(r.initiators) << '\n';
  }
}

json events_to_json(const EventLog<double>& log) {
  json out = json::array();
  for (const auto& r : log) {
    json initiators = json::array();
    for (Index i : r.initiators) initiators.push_back(i + 1);
    out.push_back({{"k", r.k},
                   {"t", r.time},
                   {"cause", std::string(to_string(r.cause))},
                   {"initiators", initiators},
                   {"msgs_up", r.messages_up},
                   {"msgs_down", r.messages_down},
                   {"snapshot",
                    {{"anchor_state", vector_json(r.snapshot.anchor_state)},
                     {"held_gradient", vector_json(r.snapshot.held_gradient)},
                     {"time", r.snapshot.time},
                     {"k", r.snapshot.sequence_index}}}});
  }
  return out;
}

json stats_to_json(const MessageStats<double>& s) {
  json out;
  out["total_events"] = s.total_events;
  out["trigger_events"] = s.trigger_events;
  out["updates"] = s.updates();
  out["messages_up"] = s.messages_up;
  out["messages_down"] = s.messages_down;
  out["initiations_per_agent"] = s.initiations_per_agent;
  out["horizon"] = s.horizon;
  const auto gaps = [](const std::optional<InterEventStats<double>>& ie) {
    return ie ? json{{"min", ie->min}, {"mean", ie->mean}, {"std", ie->stddev}} : json(nullptr);
  };
  out["inter_event"] = gaps(s.inter_event);
  out["triggered_inter_event"] = gaps(s.triggered_inter_event);
  return out;
}

json report_to_json(const VerificationReport<double>& report) {
  json checks = json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"status", std::string(to_string(c.status))},
                      {"margin", c.margin},
                      {"tolerance", c.tolerance},
                      {"detail", c.detail}});
  }
  return {{"all_passed", report.all_passed()}, {"checks", checks}};
}

json sweep_to_json(const SweepResult<double>& result) {
  const auto& a = result.aggregate;
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json runs = json::array();
  for (const auto& e : result.entries) {
    json entry = {{"index", e.index}, {"initial_state", vector_json(e.initial_state)}};
    if (e.stats) {
      entry["stats"] = stats_to_json(*e.stats);
    } else {
      entry["error"] = e.error;
    }
    runs.push_back(entry);
  }
  return {{"aggregate",
           {{"runs", a.runs},
            {"succeeded", a.succeeded},
            {"miet_mean", opt(a.miet_mean)},
            {"miet_std", opt(a.miet_std)},
            {"updates_mean", a.updates_mean},
            {"updates_std", a.updates_std},
            {"messages_up_mean", a.messages_up_mean},
            {"messages_down_mean", a.messages_down_mean}}},
          {"runs", runs}};
}

void print_report(std::ostream& os, const VerificationReport<double>& report) {
  for (const auto& c : report.checks) {
    os << "  " << to_string(c.status) << "  " << c.name;
    if (c.status != CheckStatus::Skipped) os << "  margin=" << format_double(c.margin);
    if (!c.detail.empty()) os << "  (" << c.detail << ')';
    os << '\n';
  }
  os << (report.all_passed() ? "verification: all checks passed\n" : "verification: FAILED\n");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace etcoord::io
