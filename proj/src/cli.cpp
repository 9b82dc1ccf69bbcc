#include "spotmarket/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "spotmarket/incentive.hpp"
#include "spotmarket/pricecap.hpp"

namespace spotmarket {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- parsing

// Counts newlines as the parser pulls characters so the callback below can
// tag every key and array element with its line.
struct LineCounter {
  const char* p = nullptr;
  int* line = nullptr;

  using difference_type = std::ptrdiff_t;
  using value_type = char;
  using pointer = const char*;
  using reference = const char&;
  using iterator_category = std::input_iterator_tag;

  reference operator*() const { return *p; }
  LineCounter& operator++() {
    if (*p == '\n') ++*line;
    ++p;
    return *this;
  }
  LineCounter operator++(int) {
    LineCounter old = *this;
    ++*this;
    return old;
  }
  bool operator==(const LineCounter& o) const { return p == o.p; }
  bool operator!=(const LineCounter& o) const { return p != o.p; }
};

struct Located {
  json doc;
  std::map<std::string, int> lines;  // json pointer -> line
};

Located parse_located(std::string_view text) {
  struct Frame {
    bool array = false;
    std::size_t next = 0;
    std::string key;
  };
  Located out;
  int line = 1;
  std::vector<Frame> frames;
  auto pointer = [&](std::size_t depth) {
    std::string s;
    for (std::size_t k = 0; k < depth; ++k)
      s += "/" + (frames[k].array ? std::to_string(frames[k].next) : frames[k].key);
    return s;
  };
  auto element = [&] {
    if (!frames.empty() && frames.back().array) out.lines.emplace(pointer(frames.size()), line);
  };
  auto finish = [&] {
    if (!frames.empty() && frames.back().array) ++frames.back().next;
  };
  json::parser_callback_t cb = [&](int, json::parse_event_t ev, json& parsed) {
    switch (ev) {
      case json::parse_event_t::object_start:
      case json::parse_event_t::array_start:
        element();
        frames.push_back({ev == json::parse_event_t::array_start, 0, {}});
        break;
      case json::parse_event_t::key:
        frames.back().key = parsed.get<std::string>();
        out.lines.emplace(pointer(frames.size()), line);
        break;
      case json::parse_event_t::value:
        element();
        finish();
        break;
      case json::parse_event_t::object_end:
      case json::parse_event_t::array_end:
        frames.pop_back();
        finish();
        break;
    }
    return true;
  };
  LineCounter first{text.data(), &line}, last{text.data() + text.size(), &line};
  try {
    out.doc = json::parse(first, last, cb);
  } catch (const json::parse_error& e) {
    // count lines up to the failing byte
    int at = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t k = 0; k + 1 < stop; ++k) at += text[k] == '\n';
    const std::string msg = "line " + std::to_string(at) + ": syntax error: " + e.what();
    throw ParseError(msg, {msg});
  }
  return out;
}

// Walks the document, collecting every problem with its line.
class Reader {
 public:
  explicit Reader(const Located& loc) : loc_(loc) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& what) const {
    const std::string msg = where(ptr) + ": " + what;
    throw ParseError(msg, {msg});
  }

  std::string where(const std::string& ptr) const {
    std::string probe = ptr;
    int line = 0;
    while (true) {
      auto it = loc_.lines.find(probe);
      if (it != loc_.lines.end()) {
        line = it->second;
        break;
      }
      const auto cut = probe.rfind('/');
      if (cut == std::string::npos || probe.empty()) break;
      probe.resize(cut);
    }
    std::string path = ptr.empty() ? "<root>" : ptr.substr(1);
    std::replace(path.begin(), path.end(), '/', '.');
    return (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + path;
  }

  void keys(const json& j, const std::string& ptr, std::initializer_list<std::string_view> allowed) const {
    if (!j.is_object()) fail(ptr, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
        fail(ptr + "/" + it.key(), "unknown key '" + it.key() + "'");
  }

  const json& need(const json& j, const std::string& ptr, const char* key) const {
    if (!j.contains(key)) fail(ptr, std::string("missing key '") + key + "'");
    return j.at(key);
  }

  double number(const json& j, const std::string& ptr) const {
    if (!j.is_number()) fail(ptr, "expected a number");
    return j.get<double>();
  }

  std::size_t count(const json& j, const std::string& ptr, std::size_t min) const {
    if (!j.is_number_integer() || j.get<long long>() < static_cast<long long>(min))
      fail(ptr, "expected an integer >= " + std::to_string(min));
    return static_cast<std::size_t>(j.get<long long>());
  }

  const json& array(const json& j, const std::string& ptr) const {
    if (!j.is_array()) fail(ptr, "expected an array");
    return j;
  }

  std::vector<double> numbers(const json& j, const std::string& ptr) const {
    std::vector<double> out;
    for (std::size_t k = 0; k < array(j, ptr).size(); ++k)
      out.push_back(number(j[k], ptr + "/" + std::to_string(k)));
    return out;
  }

  // Curves: [[breakpoint, marginal], ...] with an optional third entry for
  // the marginal's slope, {"pieces": [[start, a, b, c], ...]}, or (utility
  // only) {"quadratic": {"a": .., "b": .., "saturation": ..}}.
  PiecewiseCurve curve(const json& j, const std::string& ptr, double end, Curvature preferred,
                       bool allow_quadratic) const {
    try {
      if (j.is_array()) {
        std::vector<MarginalSegment> segs;
        for (std::size_t k = 0; k < j.size(); ++k) {
          const std::string p = ptr + "/" + std::to_string(k);
          const auto v = numbers(j[k], p);
          if (v.size() != 2 && v.size() != 3) fail(p, "expected [breakpoint, marginal] or [breakpoint, marginal, slope]");
          if (k > 0 && v[0] >= end) break;  // beyond the domain
          segs.push_back({v[0], v[1], v.size() == 3 ? v[2] : 0.0});
        }
        if (segs.empty()) fail(ptr, "curve needs at least one segment");
        return tagged([&](Curvature c) { return PiecewiseCurve::from_marginals(segs, end, c); },
                      preferred);
      }
      if (j.is_object() && j.contains("quadratic")) {
        if (!allow_quadratic) fail(ptr, "quadratic shorthand is for utilities only");
        keys(j, ptr, {"quadratic"});
        const json& q = j.at("quadratic");
        const std::string p = ptr + "/quadratic";
        keys(q, p, {"a", "b", "saturation"});
        const double a = number(need(q, p, "a"), p + "/a");
        const double b = number(need(q, p, "b"), p + "/b");
        const double sat = q.contains("saturation") ? number(q.at("saturation"), p + "/saturation") : -1.0;
        return PiecewiseCurve::capped_quadratic_utility(a, b, sat);
      }
      if (j.is_object() && j.contains("pieces")) {
        keys(j, ptr, {"pieces", "end"});
        if (j.contains("end")) end = number(j.at("end"), ptr + "/end");
        std::vector<Piece> pieces;
        const json& ps = array(j.at("pieces"), ptr + "/pieces");
        for (std::size_t k = 0; k < ps.size(); ++k) {
          const std::string p = ptr + "/pieces/" + std::to_string(k);
          const auto v = numbers(ps[k], p);
          if (v.size() != 4) fail(p, "expected [start, quadratic, linear, constant]");
          pieces.push_back({v[0], v[1], v[2], v[3]});
        }
        return tagged([&](Curvature c) { return PiecewiseCurve(pieces, end, c); }, preferred);
      }
    } catch (const CurveError& e) {
      fail(ptr, e.what());
    }
    fail(ptr, "expected a curve: segment list, {\"pieces\": ...} or {\"quadratic\": ...}");
  }

 private:
  // Wrong curvature is left for validation to report with unit coordinates.
  template <class Make>
  static PiecewiseCurve tagged(Make make, Curvature preferred) {
    try {
      return make(preferred);
    } catch (const CurveError& e) {
      const std::string what = e.what();
      if (what.find("tagged") == std::string::npos) throw;
    }
    const Curvature other = preferred == Curvature::Convex ? Curvature::Concave : Curvature::Convex;
    try {
      return make(other);
    } catch (const CurveError&) {
      return make(Curvature::Unconstrained);
    }
  }

  const Located& loc_;
};

struct UnitKey {
  std::size_t node, producer, index;
};

UnitKey unit_key(const Reader& r, const json& j, const std::string& ptr) {
  return {r.count(r.need(j, ptr, "node"), ptr + "/node", 1) - 1,
          r.count(r.need(j, ptr, "producer"), ptr + "/producer", 1) - 1,
          r.count(r.need(j, ptr, "unit"), ptr + "/unit", 1) - 1};
}

std::vector<PiecewiseCurve> parse_utilities(const Reader& r, const json& nodes, const std::string& ptr) {
  std::vector<PiecewiseCurve> out;
  for (std::size_t n = 0; n < r.array(nodes, ptr).size(); ++n) {
    const std::string p = ptr + "/" + std::to_string(n);
    r.keys(nodes[n], p, {"utility"});
    out.push_back(r.curve(r.need(nodes[n], p, "utility"), p + "/utility", kInfinity,
                          Curvature::Concave, true));
  }
  return out;
}

SolverConfig parse_solver(const Reader& r, const json& j, const std::string& ptr) {
  r.keys(j, ptr, {"tolerance", "max_sweeps", "damping", "initial", "check_sensitivity"});
  SolverConfig c;
  if (j.contains("tolerance")) c.tolerance = r.number(j["tolerance"], ptr + "/tolerance");
  if (j.contains("max_sweeps")) c.max_sweeps = static_cast<int>(r.count(j["max_sweeps"], ptr + "/max_sweeps", 1));
  if (j.contains("damping")) c.damping = r.number(j["damping"], ptr + "/damping");
  if (j.contains("check_sensitivity")) {
    if (!j["check_sensitivity"].is_boolean()) r.fail(ptr + "/check_sensitivity", "expected true or false");
    c.check_sensitivity = j["check_sensitivity"].get<bool>();
  }
  if (j.contains("initial")) {
    const json& v = j["initial"];
    if (v == "zero") c.initial = InitialProfile::Zero;
    else if (v == "competitive") c.initial = InitialProfile::Competitive;
    else r.fail(ptr + "/initial", "expected \"zero\" or \"competitive\"");
  }
  try {
    c.check();
  } catch (const DomainError& e) {
    r.fail(ptr, e.what());
  }
  return c;
}

MarketScenario parse_market(const Reader& r, const json& doc) {
  MarketScenario s;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) r.fail("/name", "expected a string");
    s.name = doc["name"].get<std::string>();
  }
  s.utilities = parse_utilities(r, r.need(doc, "", "nodes"), "/nodes");
  s.grid.node_count = s.utilities.size();

  if (doc.contains("lines")) {
    const json& ls = r.array(doc["lines"], "/lines");
    for (std::size_t l = 0; l < ls.size(); ++l) {
      const std::string p = "/lines/" + std::to_string(l);
      r.keys(ls[l], p, {"ptdf", "capacity"});
      Line line{r.numbers(r.need(ls[l], p, "ptdf"), p + "/ptdf"),
                r.number(r.need(ls[l], p, "capacity"), p + "/capacity")};
      if (line.ptdf.size() != s.grid.node_count)
        r.fail(p + "/ptdf", "expected " + std::to_string(s.grid.node_count) + " entries, got " +
                                std::to_string(line.ptdf.size()));
      s.grid.lines.push_back(std::move(line));
    }
  }
  if (doc.contains("iso_constraints")) {
    const json& cs = r.array(doc["iso_constraints"], "/iso_constraints");
    for (std::size_t c = 0; c < cs.size(); ++c) {
      const std::string p = "/iso_constraints/" + std::to_string(c);
      r.keys(cs[c], p, {"generation", "demand", "rhs"});
      IsoConstraint k;
      k.generation = r.numbers(r.need(cs[c], p, "generation"), p + "/generation");
      k.demand = r.numbers(r.need(cs[c], p, "demand"), p + "/demand");
      k.rhs = r.number(r.need(cs[c], p, "rhs"), p + "/rhs");
      for (const char* key : {"generation", "demand"})
        if (cs[c][key].size() != s.grid.node_count)
          r.fail(p + "/" + key, "expected " + std::to_string(s.grid.node_count) + " entries");
      s.grid.extra_constraints.push_back(std::move(k));
    }
  }

  s.channel_count = doc.contains("pollutants") ? r.count(doc["pollutants"], "/pollutants", 1) : 1;
  std::size_t producers = 0;
  const json& us = r.array(r.need(doc, "", "units"), "/units");
  for (std::size_t k = 0; k < us.size(); ++k) {
    const std::string p = "/units/" + std::to_string(k);
    r.keys(us[k], p, {"node", "producer", "unit", "capacity", "cost", "pollution"});
    const UnitKey key = unit_key(r, us[k], p);
    Unit u;
    u.node = key.node;
    u.producer = key.producer;
    u.index = key.index;
    u.capacity = r.number(r.need(us[k], p, "capacity"), p + "/capacity");
    if (!(u.capacity >= 0.0)) r.fail(p + "/capacity", "capacity must be >= 0");
    u.cost = r.curve(r.need(us[k], p, "cost"), p + "/cost", u.capacity, Curvature::Convex, false);
    if (us[k].contains("pollution")) {
      const json& ps = r.array(us[k]["pollution"], p + "/pollution");
      for (std::size_t m = 0; m < ps.size(); ++m)
        u.pollution.push_back(r.curve(ps[m], p + "/pollution/" + std::to_string(m), u.capacity,
                                      Curvature::Convex, false));
    } else {
      u.pollution.assign(s.channel_count, PiecewiseCurve::zero(u.capacity));
    }
    producers = std::max(producers, u.producer + 1);
    s.units.push_back(std::move(u));
  }
  s.producer_count = doc.contains("producers") ? r.count(doc["producers"], "/producers", 0) : producers;

  s.externality.damage.assign(s.node_count(), {});
  for (auto& row : s.externality.damage)
    row.assign(s.channel_count, PiecewiseCurve::zero(kInfinity));
  if (doc.contains("externalities")) {
    const json& es = r.array(doc["externalities"], "/externalities");
    for (std::size_t e = 0; e < es.size(); ++e) {
      const std::string p = "/externalities/" + std::to_string(e);
      r.keys(es[e], p, {"node", "damage"});
      const std::size_t n = r.count(r.need(es[e], p, "node"), p + "/node", 1) - 1;
      if (n >= s.node_count()) r.fail(p + "/node", "references a missing node");
      const json& ds = r.array(r.need(es[e], p, "damage"), p + "/damage");
      if (ds.size() != s.channel_count)
        r.fail(p + "/damage", "expected one damage curve per pollutant (" + std::to_string(s.channel_count) + ")");
      for (std::size_t m = 0; m < ds.size(); ++m)
        s.externality.damage[n][m] =
            r.curve(ds[m], p + "/damage/" + std::to_string(m), kInfinity, Curvature::Convex, false);
    }
  }

  if (doc.contains("price_caps")) {
    const json& c = doc["price_caps"];
    std::vector<double> caps;
    auto one = [&](const json& v, const std::string& p) {
      return v.is_null() ? kInfinity : r.number(v, p);
    };
    if (c.is_array()) {
      for (std::size_t n = 0; n < c.size(); ++n) caps.push_back(one(c[n], "/price_caps/" + std::to_string(n)));
    } else {
      caps.assign(s.node_count(), one(c, "/price_caps"));
    }
    s.price_caps = caps;
  }
  if (doc.contains("offsets")) s.incentive_offsets = r.numbers(doc["offsets"], "/offsets");
  s.canonicalize();
  return s;
}

std::optional<std::size_t> find_unit(const MarketScenario& s, const UnitKey& k) {
  for (std::size_t u = 0; u < s.units.size(); ++u)
    if (s.units[u].node == k.node && s.units[u].producer == k.producer && s.units[u].index == k.index)
      return u;
  return std::nullopt;
}

MultiIntervalScenario parse_multi(const Reader& r, const json& j, const MarketScenario& base,
                                  MultiConfig& config) {
  const std::string ptr = "/multi_interval";
  r.keys(j, ptr, {"intervals", "energy_limits", "constraints", "budget_tolerance", "max_rounds", "lambda_max"});
  if (j.contains("budget_tolerance")) config.budget_tolerance = r.number(j["budget_tolerance"], ptr + "/budget_tolerance");
  if (j.contains("max_rounds")) config.max_rounds = static_cast<int>(r.count(j["max_rounds"], ptr + "/max_rounds", 1));
  if (j.contains("lambda_max")) config.lambda_max = r.number(j["lambda_max"], ptr + "/lambda_max");

  MultiIntervalScenario m;
  const json& is = r.array(r.need(j, ptr, "intervals"), ptr + "/intervals");
  for (std::size_t t = 0; t < is.size(); ++t) {
    const std::string p = ptr + "/intervals/" + std::to_string(t);
    r.keys(is[t], p, {"nodes", "units"});
    MarketScenario s = base;
    if (is[t].contains("nodes")) {
      s.utilities = parse_utilities(r, is[t]["nodes"], p + "/nodes");
      if (s.utilities.size() != base.node_count())
        r.fail(p + "/nodes", "expected " + std::to_string(base.node_count()) + " nodes");
    }
    if (is[t].contains("units")) {
      const json& us = r.array(is[t]["units"], p + "/units");
      for (std::size_t k = 0; k < us.size(); ++k) {
        const std::string q = p + "/units/" + std::to_string(k);
        r.keys(us[k], q, {"node", "producer", "unit", "capacity"});
        const auto u = find_unit(s, unit_key(r, us[k], q));
        if (!u) r.fail(q, "references a missing unit");
        s.units[*u].capacity = r.number(r.need(us[k], q, "capacity"), q + "/capacity");
      }
    }
    m.intervals.push_back(std::move(s));
  }
  if (j.contains("energy_limits")) {
    const json& es = r.array(j["energy_limits"], ptr + "/energy_limits");
    for (std::size_t l = 0; l < es.size(); ++l) {
      const std::string p = ptr + "/energy_limits/" + std::to_string(l);
      r.keys(es[l], p, {"node", "producer", "unit", "budget"});
      const UnitKey k = unit_key(r, es[l], p);
      m.energy_limits.push_back({{k.node, k.producer, k.index}, r.number(r.need(es[l], p, "budget"), p + "/budget")});
    }
  }
  if (j.contains("constraints")) {
    const json& cs = r.array(j["constraints"], ptr + "/constraints");
    for (std::size_t c = 0; c < cs.size(); ++c) {
      const std::string p = ptr + "/constraints/" + std::to_string(c);
      r.keys(cs[c], p, {"terms", "rhs"});
      LinearConstraint lc;
      lc.rhs = r.number(r.need(cs[c], p, "rhs"), p + "/rhs");
      const json& ts = r.array(r.need(cs[c], p, "terms"), p + "/terms");
      for (std::size_t k = 0; k < ts.size(); ++k) {
        const std::string q = p + "/terms/" + std::to_string(k);
        r.keys(ts[k], q, {"interval", "node", "producer", "unit", "coefficient"});
        const UnitKey u = unit_key(r, ts[k], q);
        lc.terms.push_back({r.count(r.need(ts[k], q, "interval"), q + "/interval", 1) - 1,
                            {u.node, u.producer, u.index},
                            r.number(r.need(ts[k], q, "coefficient"), q + "/coefficient")});
      }
      m.constraints.push_back(std::move(lc));
    }
  }
  return m;
}

// ---------------------------------------------------------------- writing

json curve_json(const PiecewiseCurve& c, double context_end) {
  json pieces = json::array();
  for (const auto& p : c.pieces()) pieces.push_back({p.start, p.quadratic, p.linear, p.constant});
  json out = {{"pieces", pieces}};
  if (c.domain_end() != context_end) out["end"] = c.domain_end();
  return out;
}

json utilities_json(const MarketScenario& s) {
  json nodes = json::array();
  for (const auto& u : s.utilities) nodes.push_back({{"utility", curve_json(u, kInfinity)}});
  return nodes;
}

json unit_id(std::size_t node, std::size_t producer, std::size_t index) {
  return {{"node", node + 1}, {"producer", producer + 1}, {"unit", index + 1}};
}

const char* initial_name(InitialProfile p) {
  return p == InitialProfile::Competitive ? "competitive" : "zero";
}

// ---------------------------------------------------------------- numbers

std::string fmt(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "unbounded" : "-unbounded";
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string unit_label(const Unit& u) {
  return "(" + std::to_string(u.node + 1) + "," + std::to_string(u.producer + 1) + "," +
         std::to_string(u.index + 1) + ")";
}

}  // namespace

ScenarioFile parse_scenario(std::string_view text) {
  const Located loc = parse_located(text);
  const Reader r(loc);
  const json& doc = loc.doc;
  r.keys(doc, "", {"schema", "name", "nodes", "lines", "iso_constraints", "producers", "pollutants",
                   "units", "externalities", "price_caps", "offsets", "solver", "multi_interval"});
  const json& schema = r.need(doc, "", "schema");
  if (!schema.is_number_integer() || schema.get<int>() != kSchemaVersion)
    r.fail("/schema", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");

  ScenarioFile f;
  f.scenario = parse_market(r, doc);
  if (doc.contains("solver")) f.solver = parse_solver(r, doc["solver"], "/solver");
  f.multi_config.solver = f.solver;
  if (doc.contains("multi_interval"))
    f.multi = parse_multi(r, doc["multi_interval"], f.scenario, f.multi_config);
  return f;
}

ScenarioFile load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path, {"cannot open " + path});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string serialize_scenario(const ScenarioFile& f) {
  const MarketScenario& s = f.scenario;
  json doc;
  doc["schema"] = kSchemaVersion;
  if (!s.name.empty()) doc["name"] = s.name;
  doc["nodes"] = utilities_json(s);
  if (!s.grid.lines.empty()) {
    json ls = json::array();
    for (const auto& l : s.grid.lines) ls.push_back({{"ptdf", l.ptdf}, {"capacity", l.capacity}});
    doc["lines"] = ls;
  }
  if (!s.grid.extra_constraints.empty()) {
    json cs = json::array();
    for (const auto& c : s.grid.extra_constraints)
      cs.push_back({{"generation", c.generation}, {"demand", c.demand}, {"rhs", c.rhs}});
    doc["iso_constraints"] = cs;
  }
  doc["producers"] = s.producer_count;
  doc["pollutants"] = s.channel_count;
  json us = json::array();
  for (const auto& u : s.units) {
    json j = unit_id(u.node, u.producer, u.index);
    j["capacity"] = u.capacity;
    j["cost"] = curve_json(u.cost, u.capacity);
    json ps = json::array();
    for (const auto& p : u.pollution) ps.push_back(curve_json(p, u.capacity));
    j["pollution"] = ps;
    us.push_back(j);
  }
  doc["units"] = us;
  json es = json::array();
  for (std::size_t n = 0; n < s.externality.damage.size(); ++n) {
    json ds = json::array();
    for (const auto& d : s.externality.damage[n]) ds.push_back(curve_json(d, kInfinity));
    es.push_back({{"node", n + 1}, {"damage", ds}});
  }
  doc["externalities"] = es;
  if (s.price_caps) {
    json caps = json::array();
    for (double c : *s.price_caps) caps.push_back(std::isinf(c) ? json(nullptr) : json(c));
    doc["price_caps"] = caps;
  }
  if (!s.incentive_offsets.empty()) doc["offsets"] = s.incentive_offsets;
  doc["solver"] = {{"tolerance", f.solver.tolerance},
                   {"max_sweeps", f.solver.max_sweeps},
                   {"damping", f.solver.damping},
                   {"initial", initial_name(f.solver.initial)},
                   {"check_sensitivity", f.solver.check_sensitivity}};
  if (f.multi) {
    const auto& m = *f.multi;
    json mj;
    json is = json::array();
    for (const auto& t : m.intervals) {
      json ij = {{"nodes", utilities_json(t)}};
      json over = json::array();
      for (std::size_t k = 0; k < t.units.size() && k < s.units.size(); ++k)
        if (t.units[k].capacity != s.units[k].capacity) {
          json o = unit_id(t.units[k].node, t.units[k].producer, t.units[k].index);
          o["capacity"] = t.units[k].capacity;
          over.push_back(o);
        }
      if (!over.empty()) ij["units"] = over;
      is.push_back(ij);
    }
    mj["intervals"] = is;
    json ls = json::array();
    for (const auto& e : m.energy_limits) {
      json j = unit_id(e.unit.node, e.unit.producer, e.unit.index);
      j["budget"] = e.budget;
      ls.push_back(j);
    }
    mj["energy_limits"] = ls;
    json cs = json::array();
    for (const auto& c : m.constraints) {
      json ts = json::array();
      for (const auto& t : c.terms) {
        json j = unit_id(t.unit.node, t.unit.producer, t.unit.index);
        j["interval"] = t.interval + 1;
        j["coefficient"] = t.coefficient;
        ts.push_back(j);
      }
      cs.push_back({{"terms", ts}, {"rhs", c.rhs}});
    }
    mj["constraints"] = cs;
    mj["budget_tolerance"] = f.multi_config.budget_tolerance;
    mj["max_rounds"] = f.multi_config.max_rounds;
    mj["lambda_max"] = f.multi_config.lambda_max;
    doc["multi_interval"] = mj;
  }
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------- modes

std::string Mode::label() const {
  switch (kind) {
    case ModeKind::Optimal: return "optimal";
    case ModeKind::Competitive: return "competitive";
    case ModeKind::Oligopolistic: return "oligopolistic";
    case ModeKind::Mechanism: return "mechanism";
    case ModeKind::Multi: return "multi";
    case ModeKind::Cap: {
      std::string s = "cap=";
      for (std::size_t k = 0; k < caps.size(); ++k) s += (k ? "/" : "") + fmt(caps[k], 6);
      return s;
    }
  }
  return "?";
}

std::vector<Mode> parse_modes(std::string_view list) {
  std::vector<Mode> out;
  std::size_t at = 0;
  while (at <= list.size()) {
    const std::size_t comma = std::min(list.find(',', at), list.size());
    const std::string tok(list.substr(at, comma - at));
    at = comma + 1;
    if (tok.empty()) continue;
    Mode m;
    if (tok == "optimal") m.kind = ModeKind::Optimal;
    else if (tok == "competitive") m.kind = ModeKind::Competitive;
    else if (tok == "oligopolistic") m.kind = ModeKind::Oligopolistic;
    else if (tok == "mechanism") m.kind = ModeKind::Mechanism;
    else if (tok == "multi") m.kind = ModeKind::Multi;
    else if (tok == "all") {
      for (ModeKind k : {ModeKind::Optimal, ModeKind::Competitive, ModeKind::Oligopolistic,
                          ModeKind::Mechanism})
        out.push_back({k, {}});
      continue;
    } else if (tok.rfind("cap=", 0) == 0 || tok.rfind("cap:", 0) == 0) {
      m.kind = ModeKind::Cap;
      std::string rest = tok.substr(4);
      std::size_t p = 0;
      while (p <= rest.size()) {
        const std::size_t slash = std::min(rest.find_first_of("/;", p), rest.size());
        const std::string v = rest.substr(p, slash - p);
        p = slash + 1;
        std::size_t used = 0;
        double c = 0.0;
        try {
          c = std::stod(v, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (v.empty() || used != v.size() || !(c >= 0.0))
          throw DomainError("bad price cap '" + v + "' in mode '" + tok + "'");
        m.caps.push_back(c);
      }
    } else {
      throw DomainError("unknown mode '" + tok + "'");
    }
    out.push_back(std::move(m));
  }
  if (out.empty()) throw DomainError("no modes given");
  return out;
}

// ---------------------------------------------------------------- run

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NonConvergenceError*>(&e)) return 2;
  if (dynamic_cast<const InfeasibleError*>(&e)) return 3;
  return 1;
}

namespace {

int status_code(ColumnStatus s) {
  switch (s) {
    case ColumnStatus::Ok: return 0;
    case ColumnStatus::Invalid: return 1;
    case ColumnStatus::NonConverged: return 2;
    case ColumnStatus::Infeasible: return 3;
  }
  return 1;
}

struct RowIndex {
  std::size_t units = 0, sw = 0, prices = 0, profit = 0, phi = 0, budget = 0, pollution = 0,
              shed = 0, lambda = 0, total = 0;
};

struct Filled {
  const EquilibriumReport* report = nullptr;
  std::optional<IncentiveSchedule> schedule;
  const std::vector<std::optional<double>>* shed = nullptr;
};

void fill(const MarketScenario& s, const RowIndex& ix, const Filled& f,
          std::vector<std::optional<double>>& v) {
  const auto& r = *f.report;
  for (std::size_t k = 0; k < s.units.size(); ++k) v[ix.units + k] = r.profile.unit(k);
  v[ix.sw] = r.social_welfare;
  for (std::size_t n = 0; n < s.node_count(); ++n) v[ix.prices + n] = r.prices[n];
  for (std::size_t i = 0; i < s.producer_count; ++i) v[ix.profit + i] = r.profit[i];
  if (f.schedule) {
    for (std::size_t i = 0; i < s.producer_count; ++i) v[ix.phi + i] = f.schedule->producers[i].payment;
    v[ix.budget] = f.schedule->budget;
  }
  const auto x = pollution_totals(s, r.profile);
  for (std::size_t n = 0; n < s.node_count(); ++n)
    for (std::size_t m = 0; m < s.channel_count; ++m) v[ix.pollution + n * s.channel_count + m] = x[n][m];
  if (f.shed)
    for (std::size_t n = 0; n < s.node_count(); ++n) v[ix.shed + n] = (*f.shed)[n].value_or(kInfinity);
}

}  // namespace

int ComparisonTable::exit_code() const {
  for (const auto& c : columns)
    if (c.status != ColumnStatus::Ok) return status_code(c.status);
  return 0;
}

ComparisonTable run(const ScenarioFile& file, std::span<const Mode> modes) {
  const MarketScenario& s = file.scenario;
  require_valid(s);
  const std::size_t nodes = s.node_count(), producers = s.producer_count;
  const std::size_t intervals = file.multi ? file.multi->intervals.size() : 0;
  const std::size_t limits = file.multi ? file.multi->energy_limits.size() : 0;
  const bool want_multi = std::any_of(modes.begin(), modes.end(),
                                      [](const Mode& m) { return m.kind == ModeKind::Multi; });
  if (want_multi && !file.multi) throw DomainError("mode 'multi' needs a multi_interval block");

  ComparisonTable t;
  RowIndex ix;
  auto add = [&](std::string name) { t.rows.push_back(std::move(name)); };
  ix.units = t.rows.size();
  for (const auto& u : s.units) add("q" + unit_label(u));
  ix.sw = t.rows.size();
  add("SW");
  ix.prices = t.rows.size();
  for (std::size_t n = 0; n < nodes; ++n) add("P" + std::to_string(n + 1));
  ix.profit = t.rows.size();
  for (std::size_t i = 0; i < producers; ++i) add("profit" + std::to_string(i + 1));
  ix.phi = t.rows.size();
  for (std::size_t i = 0; i < producers; ++i) add("phi" + std::to_string(i + 1));
  ix.budget = t.rows.size();
  add("ISO budget");
  ix.pollution = t.rows.size();
  for (std::size_t n = 0; n < nodes; ++n)
    for (std::size_t m = 0; m < s.channel_count; ++m)
      add("x" + std::to_string(n + 1) + (s.channel_count > 1 ? "," + std::to_string(m + 1) : ""));
  ix.shed = t.rows.size();
  for (std::size_t n = 0; n < nodes; ++n) add("load shed" + std::to_string(n + 1));
  ix.lambda = t.rows.size();
  if (want_multi)
    for (const auto& e : file.multi->energy_limits)
      add("lambda(" + std::to_string(e.unit.node + 1) + "," + std::to_string(e.unit.producer + 1) +
          "," + std::to_string(e.unit.index + 1) + ")");
  ix.total = t.rows.size();

  auto blank = [&](std::string label) {
    TableColumn c;
    c.label = std::move(label);
    c.values.assign(ix.total, std::nullopt);
    return c;
  };
  auto failed = [&](TableColumn& c, const std::exception& e) {
    const int code = exit_code_for(e);
    c.status = code == 2 ? ColumnStatus::NonConverged
             : code == 3 ? ColumnStatus::Infeasible
                         : ColumnStatus::Invalid;
    c.message = e.what();
    std::fill(c.values.begin(), c.values.end(), std::nullopt);
  };

  for (const Mode& mode : modes) {
    if (mode.kind == ModeKind::Multi) {
      std::vector<TableColumn> cols;
      for (std::size_t k = 0; k < intervals; ++k) cols.push_back(blank("multi t" + std::to_string(k + 1)));
      try {
        MultiConfig mc = file.multi_config;
        mc.solver = file.solver;
        const auto rep = solve_multi(EquilibriumKind::Optimal, *file.multi, mc);
        for (std::size_t k = 0; k < intervals; ++k) {
          const MarketScenario& sk = file.multi->intervals[k];
          Filled f;
          f.report = &rep.intervals[k];
          fill(sk, ix, f, cols[k].values);
          double budget = 0.0;
          for (std::size_t i = 0; i < producers; ++i) {
            cols[k].values[ix.phi + i] = rep.payments[k][i];
            budget += rep.payments[k][i];
          }
          cols[k].values[ix.budget] = budget;
          for (std::size_t l = 0; l < limits; ++l) cols[k].values[ix.lambda + l] = rep.lambdas[l];
        }
      } catch (const std::exception& e) {
        for (auto& c : cols) failed(c, e);
      }
      for (auto& c : cols) t.columns.push_back(std::move(c));
      continue;
    }

    TableColumn col = blank(mode.label());
    try {
      Filled f;
      EquilibriumReport rep;
      std::optional<CappedReport> capped;
      switch (mode.kind) {
        case ModeKind::Optimal:
        case ModeKind::Competitive:
        case ModeKind::Oligopolistic: {
          const auto kind = mode.kind == ModeKind::Optimal       ? EquilibriumKind::Optimal
                            : mode.kind == ModeKind::Competitive ? EquilibriumKind::Competitive
                                                                 : EquilibriumKind::Oligopolistic;
          rep = solve(kind, s, file.solver);
          f.report = &rep;
          break;
        }
        case ModeKind::Cap: {
          std::vector<double> caps = mode.caps;
          if (caps.size() == 1) caps.assign(nodes, caps.front());
          if (caps.size() != nodes)
            throw DomainError("cap mode needs one value or " + std::to_string(nodes));
          capped = solve_capped(s, caps, file.solver);
          f.report = &capped->equilibrium;
          f.shed = &capped->load_shed;
          break;
        }
        case ModeKind::Mechanism:
          rep = solve_mechanism(s, file.solver);
          f.report = &rep;
          f.schedule = incentive_schedule(s, rep);
          break;
        case ModeKind::Multi: break;
      }
      fill(s, ix, f, col.values);
    } catch (const std::exception& e) {
      failed(col, e);
    }
    t.columns.push_back(std::move(col));
  }
  return t;
}

std::string format_table(const ComparisonTable& t, OutputFormat format) {
  auto status_text = [](const TableColumn& c) -> std::string {
    switch (c.status) {
      case ColumnStatus::Ok: return "ok";
      case ColumnStatus::NonConverged: return "non-converged";
      case ColumnStatus::Infeasible: return "infeasible";
      case ColumnStatus::Invalid: return "invalid";
    }
    return "?";
  };
  std::ostringstream out;
  if (format == OutputFormat::Csv) {
    auto cell = [](const std::optional<double>& v) -> std::string {
      if (!v) return "";
      if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
      return fmt(*v, 17);
    };
    out << "row";
    for (const auto& c : t.columns) out << "," << c.label;
    out << "\nstatus";
    for (const auto& c : t.columns) out << "," << status_text(c);
    out << "\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      out << t.rows[r];
      for (const auto& c : t.columns) out << "," << cell(c.values[r]);
      out << "\n";
    }
    return out.str();
  }

  std::vector<std::vector<std::string>> grid;
  grid.push_back({""});
  for (const auto& c : t.columns) grid.back().push_back(c.label);
  grid.push_back({"status"});
  for (const auto& c : t.columns) grid.back().push_back(status_text(c));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    grid.push_back({t.rows[r]});
    for (const auto& c : t.columns) grid.back().push_back(c.values[r] ? fmt(*c.values[r], 6) : "-");
  }
  std::vector<std::size_t> width(t.columns.size() + 1, 0);
  for (const auto& row : grid)
    for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], row[k].size());
  for (const auto& row : grid) {
    std::string line;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k == 0) line += row[k] + std::string(width[k] - row[k].size(), ' ');
      else line += "  " + std::string(width[k] - row[k].size(), ' ') + row[k];
    }
    out << line << "\n";
  }
  for (const auto& c : t.columns)
    if (c.status != ColumnStatus::Ok) out << c.label << ": " << c.message << "\n";
  return out.str();
}

// ---------------------------------------------------------------- curves

CurveTable emit_curves(const ScenarioFile& file, std::size_t node, std::optional<std::size_t> producer,
                       double step) {
  const MarketScenario& s = file.scenario;
  require_valid(s);
  if (!(step > 0.0) || !std::isfinite(step)) throw DomainError("sample step must be positive");
  if (node >= s.node_count()) throw DomainError("no such node");
  if (producer && *producer >= s.producer_count) throw DomainError("no such producer");

  std::vector<std::size_t> owners;
  if (producer) owners.push_back(*producer);
  else
    for (std::size_t i = 0; i < s.producer_count; ++i) owners.push_back(i);

  // damage at the optimal profile when it solves, else at zero output
  std::optional<EquilibriumReport> optimal;
  try {
    optimal = solve(EquilibriumKind::Optimal, s, file.solver);
  } catch (const Error&) {
  }
  const GenerationProfile zero = GenerationProfile::zero(s);
  const TotalsView& at = optimal ? optimal->profile.totals() : zero.totals();

  std::vector<MeritComponent> truth, mech;
  for (std::size_t i : owners)
    for (std::size_t k : s.units_of(node, i)) truth.push_back({s.units[k].cost, s.units[k].capacity});
  for (std::size_t i : owners) {
    if (s.units_of(node, i).empty()) continue;
    const PiecewiseCurve c = declared_cost_under_mechanism(s, i, node, at);
    mech.push_back({c, c.domain_end()});
  }

  CurveTable out;
  out.columns = {"q"};
  std::optional<PiecewiseCurve> true_curve, mech_curve, mp_curve;
  if (!truth.empty()) {
    true_curve = merit_merge(truth).aggregate();
    mech_curve = merit_merge(mech).aggregate();
    out.columns.push_back("marginal_true_cost");
  }
  if (producer && true_curve) {
    try {
      const auto olig = solve(EquilibriumKind::Oligopolistic, s, file.solver);
      mp_curve = declared_cost_market_power(s, olig, *producer, node);
      out.columns.push_back("marginal_declared_market_power");
    } catch (const Error&) {
    }
  }
  if (mech_curve) out.columns.push_back("marginal_declared_mechanism");
  out.columns.push_back("marginal_utility");
  if (s.price_caps) out.columns.push_back("price_cap");

  const double top = true_curve ? true_curve->domain_end() : 0.0;
  const auto samples = static_cast<std::size_t>(std::floor(top / step + 1e-9));
  for (std::size_t k = 0; k <= samples; ++k) {
    const double q = std::min(top, static_cast<double>(k) * step);
    std::vector<double> row{q};
    if (true_curve) row.push_back(true_curve->right_derivative(q));
    if (mp_curve) row.push_back(mp_curve->right_derivative(q));
    if (mech_curve) row.push_back(mech_curve->right_derivative(q));
    row.push_back(s.utilities[node].right_derivative(q));
    if (s.price_caps) row.push_back((*s.price_caps)[node]);
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string format_curves(const CurveTable& t) {
  std::ostringstream out;
  for (std::size_t k = 0; k < t.columns.size(); ++k) out << (k ? "," : "") << t.columns[k];
  out << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t k = 0; k < row.size(); ++k)
      out << (k ? "," : "") << (std::isinf(row[k]) ? (row[k] > 0 ? "inf" : "-inf") : fmt(row[k], 17));
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------- verify

VerifyReport verify(std::string_view text) {
  VerifyReport rep;
  ScenarioFile f;
  try {
    f = parse_scenario(text);
  } catch (const ParseError& e) {
    for (const auto& p : e.problems()) rep.failures.push_back("schema: " + p);
    return rep;
  } catch (const std::exception& e) {
    rep.failures.push_back(std::string("schema: ") + e.what());
    return rep;
  }
  rep.passed.push_back("schema");

  const MarketScenario& s = f.scenario;
  const auto v = validate(s);
  for (const auto& x : v.violations) rep.failures.push_back("validate: " + x.location + ": " + x.message);
  if (f.multi)
    for (const auto& x : validate(*f.multi).violations)
      rep.failures.push_back("validate: " + x.location + ": " + x.message);
  if (!rep.failures.empty()) return rep;
  rep.passed.push_back("validate");

  // merged (node, producer) cost curves must stay convex
  bool convex = true;
  for (std::size_t n = 0; n < s.node_count(); ++n)
    for (std::size_t i = 0; i < s.producer_count; ++i) {
      std::vector<MeritComponent> comps;
      for (std::size_t k : s.units_of(n, i)) comps.push_back({s.units[k].cost, s.units[k].capacity});
      if (comps.empty()) continue;
      try {
        if (merit_merge(comps).aggregate().is_convex()) continue;
      } catch (const Error&) {
      }
      convex = false;
      rep.failures.push_back("convexity: merged cost at node " + std::to_string(n + 1) + " producer " +
                             std::to_string(i + 1));
    }
  if (convex) rep.passed.push_back("merged cost convexity");

  // prices at sampled nodal totals inside the capacity box
  std::vector<double> cap(s.node_count(), 0.0);
  for (const auto& u : s.units) cap[u.node] += u.capacity;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const DemandModel model = s.demand_model();
  double worst = 0.0;
  std::string where;
  for (int k = 0; k < 64; ++k) {
    std::vector<double> q(s.node_count());
    for (std::size_t n = 0; n < q.size(); ++n) q[n] = k == 0 ? 0.0 : k == 1 ? cap[n] : cap[n] * unit(rng);
    try {
      const auto p = model.prices(q);
      for (std::size_t n = 0; n < p.size(); ++n)
        if (p[n] < worst) {
          worst = p[n];
          where = "node " + std::to_string(n + 1);
        }
    } catch (const Error& e) {
      rep.failures.push_back(std::string("prices: ") + e.what());
      return rep;
    }
  }
  if (worst < -1e-9)
    rep.failures.push_back("prices: negative price " + fmt(worst, 6) + " at " + where);
  else
    rep.passed.push_back("price nonnegativity (64 samples)");
  return rep;
}

std::string format_verify(const VerifyReport& r) {
  std::ostringstream out;
  for (const auto& p : r.passed) out << "ok    " << p << "\n";
  for (const auto& p : r.failures) out << "FAIL  " << p << "\n";
  out << (r.ok() ? "all checks passed" : std::to_string(r.failures.size()) + " check(s) failed") << "\n";
  return out.str();
}

}  // namespace spotmarket
