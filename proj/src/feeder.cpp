#include "cvr/feeder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cvr {

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& message)
    : InputError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line), column_(column) {}

bool PhaseSet::parse(std::string_view text, PhaseSet& out) {
  PhaseSet set;
  if (text.empty()) return false;
  for (char ch : text) {
    Phase p;
    switch (ch) {
    case 'a': case 'A': p = Phase::a; break;
    case 'b': case 'B': p = Phase::b; break;
    case 'c': case 'C': p = Phase::c; break;
    default: return false;
    }
    if (set.has(p)) return false;
    set.insert(p);
  }
  out = set;
  return true;
}

std::string PhaseSet::str() const {
  std::string s;
  for (Phase p : kAllPhases)
    if (has(p)) s.push_back(to_char(p));
  return s;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

struct Token {
  std::string_view text;
  std::size_t column;
};

struct Record {
  std::size_t line;
  std::vector<Token> tokens;
};

std::vector<Record> tokenize(std::string_view text) {
  std::vector<Record> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    Record rec{line_no, {}};
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      std::size_t start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
      if (i > start) rec.tokens.push_back({line.substr(start, i - start), start + 1});
    }
    if (!rec.tokens.empty()) records.push_back(std::move(rec));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return records;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

// Accepts "a", "bj", "a+bj", "a-bj" (also with 'i').
bool parse_complex(std::string_view s, Complex& out) {
  if (s.empty()) return false;
  const char last = s.back();
  if (last != 'j' && last != 'i') {
    double re;
    if (!parse_double(s, re)) return false;
    out = {re, 0.0};
    return true;
  }
  std::string_view body = s.substr(0, s.size() - 1);
  std::size_t split = std::string_view::npos;
  for (std::size_t k = body.size(); k-- > 1;) {
    if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') {
      split = k;
      break;
    }
  }
  double re = 0.0, im = 0.0;
  if (split == std::string_view::npos) {
    if (body.empty() || body == "+") im = 1.0;
    else if (body == "-") im = -1.0;
    else if (!parse_double(body, im)) return false;
  } else {
    if (!parse_double(body.substr(0, split), re)) return false;
    std::string_view imag = body.substr(split);
    if (imag == "+") im = 1.0;
    else if (imag == "-") im = -1.0;
    else if (!parse_double(imag, im)) return false;
  }
  out = {re, im};
  return true;
}

class RecordReader {
public:
  explicit RecordReader(const Record& rec) : rec_(rec) {}

  bool done() const { return next_ >= rec_.tokens.size(); }

  const Token& peek() const { return rec_.tokens[next_]; }
  const Token& last() const { return rec_.tokens[next_ - 1]; }
  std::size_t column() const { return done() ? 0 : peek().column; }

  const Token& take(const char* what) {
    if (done()) {
      std::size_t col = rec_.tokens.empty() ? 1 : rec_.tokens.back().column + rec_.tokens.back().text.size();
      throw ParseError(rec_.line, col, std::string("expected ") + what);
    }
    return rec_.tokens[next_++];
  }

  std::string id(const char* what) { return std::string(take(what).text); }

  double number(const char* what) {
    const Token& t = take(what);
    double v;
    if (!parse_double(t.text, v)) fail(t, std::string("expected number for ") + what + ", got '" + std::string(t.text) + "'");
    return v;
  }

  PhaseSet phases(const char* what) {
    const Token& t = take(what);
    PhaseSet set;
    if (!PhaseSet::parse(t.text, set)) fail(t, "invalid phase set '" + std::string(t.text) + "'");
    return set;
  }

  Complex complex(const char* what) {
    const Token& t = take(what);
    Complex z;
    if (!parse_complex(t.text, z)) fail(t, std::string("invalid complex number for ") + what + ": '" + std::string(t.text) + "'");
    return z;
  }

  void keyword(const char* kw) {
    const Token& t = take(kw);
    if (t.text != kw) fail(t, std::string("expected keyword ") + kw + ", got '" + std::string(t.text) + "'");
  }

  bool accept(const char* kw) {
    if (!done() && peek().text == kw) {
      ++next_;
      return true;
    }
    return false;
  }

  void finish() {
    if (!done()) fail(peek(), "unexpected token '" + std::string(peek().text) + "'");
  }

  [[noreturn]] void fail(const Token& t, const std::string& msg) const { throw ParseError(rec_.line, t.column, msg); }

  std::size_t line() const { return rec_.line; }

private:
  const Record& rec_;
  std::size_t next_ = 0;
};

struct Located {
  std::size_t line;
  std::size_t column;
};

struct RawLine {
  Line line;
  std::string from, to;
  Located from_pos, to_pos;
};

struct RawDevice {
  std::string ref;
  Located ref_pos;
};

template <typename T>
void sort_by_id(std::vector<T>& items, std::vector<RawDevice>& refs) {
  std::vector<std::size_t> perm(items.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return items[a].id < items[b].id; });
  std::vector<T> sorted_items;
  std::vector<RawDevice> sorted_refs;
  for (std::size_t i : perm) {
    sorted_items.push_back(std::move(items[i]));
    sorted_refs.push_back(std::move(refs[i]));
  }
  items = std::move(sorted_items);
  refs = std::move(sorted_refs);
}

template <typename T>
void check_unique(const std::vector<T>& items, const char* kind) {
  for (std::size_t i = 1; i < items.size(); ++i)
    if (items[i].id == items[i - 1].id) throw InputError(std::string("duplicate ") + kind + " id '" + items[i].id + "'");
}

} // namespace

FeederModel parse_feeder(std::string_view text) {
  FeederModel model;
  bool have_base = false;
  std::vector<RawLine> raw_lines;
  std::vector<RawDevice> reg_refs, cap_refs, load_refs, pv_refs;
  // Loads and PV are in kW until the base is known.
  for (const Record& rec : tokenize(text)) {
    RecordReader r(rec);
    const Token& head = r.take("record keyword");
    const std::string_view kw = head.text;
    if (kw == "BASE") {
      if (have_base) r.fail(head, "duplicate BASE record");
      model.base_mva = r.number("base MVA");
      model.base_kv = r.number("base kV");
      if (model.base_mva <= 0.0 || model.base_kv <= 0.0) r.fail(head, "BASE values must be positive");
      have_base = true;
    } else if (kw == "BUS") {
      Bus bus;
      bus.id = r.id("bus id");
      bus.phases = r.phases("bus phases");
      while (!r.done()) {
        if (r.accept("SLACK")) bus.is_substation = true;
        else if (r.accept("VMIN")) bus.vmin = r.number("VMIN");
        else if (r.accept("VMAX")) bus.vmax = r.number("VMAX");
        else r.fail(r.peek(), "unexpected token '" + std::string(r.peek().text) + "'");
      }
      model.buses.push_back(std::move(bus));
    } else if (kw == "LINE") {
      RawLine raw;
      raw.line.id = r.id("line id");
      raw.from_pos = {rec.line, r.column()};
      raw.from = r.id("from bus");
      raw.to_pos = {rec.line, r.column()};
      raw.to = r.id("to bus");
      raw.line.phases = r.phases("line phases");
      r.keyword("Z");
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) raw.line.z(i, j) = r.complex("impedance entry");
      if (r.accept("SMAX")) raw.line.s_max = r.number("SMAX");
      r.finish();
      raw_lines.push_back(std::move(raw));
    } else if (kw == "REG") {
      Regulator reg;
      reg.id = r.id("regulator id");
      RawDevice ref{"", {rec.line, r.column()}};
      ref.ref = r.id("regulator line");
      reg.phases = r.phases("regulator phases");
      reg.gang_operated = r.accept("GANG");
      r.finish();
      model.regulators.push_back(std::move(reg));
      reg_refs.push_back(std::move(ref));
    } else if (kw == "CAP") {
      CapacitorBank cap;
      cap.id = r.id("capacitor id");
      RawDevice ref{"", {rec.line, r.column()}};
      ref.ref = r.id("capacitor bus");
      cap.phases = r.phases("capacitor phases");
      cap.q_rated = r.number("kvar per phase");
      cap.gang_operated = r.accept("GANG");
      r.finish();
      model.capacitors.push_back(std::move(cap));
      cap_refs.push_back(std::move(ref));
    } else if (kw == "LOAD") {
      ZipLoad load;
      load.id = r.id("load id");
      RawDevice ref{"", {rec.line, r.column()}};
      ref.ref = r.id("load bus");
      PhaseSet ph = r.phases("load phase");
      if (ph.count() != 1) r.fail(r.last(), "a load connects to exactly one phase");
      for (Phase p : kAllPhases)
        if (ph.has(p)) load.phase = p;
      load.p0 = r.number("kW");
      load.q0 = r.number("kvar");
      r.keyword("ZIP");
      for (double& k : load.kp) k = r.number("ZIP coefficient");
      for (double& k : load.kq) k = r.number("ZIP coefficient");
      r.finish();
      model.loads.push_back(std::move(load));
      load_refs.push_back(std::move(ref));
    } else if (kw == "PV") {
      PvUnit pv;
      pv.id = r.id("pv id");
      RawDevice ref{"", {rec.line, r.column()}};
      ref.ref = r.id("pv bus");
      pv.phases = r.phases("pv phases");
      pv.p_max = r.number("kW max");
      pv.s_rated = r.number("inverter kVA");
      r.keyword("PROFILE");
      pv.profile_ref = r.id("profile id");
      r.finish();
      model.pvs.push_back(std::move(pv));
      pv_refs.push_back(std::move(ref));
    } else {
      r.fail(head, "unknown record keyword '" + std::string(kw) + "'");
    }
  }
  if (!have_base) throw InputError("missing BASE record");

  std::sort(model.buses.begin(), model.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
  check_unique(model.buses, "bus");

  auto resolve_bus = [&](const std::string& id, Located pos) {
    auto idx = model.find_bus(id);
    if (!idx) throw ParseError(pos.line, pos.column, "unknown bus reference '" + id + "'");
    return *idx;
  };

  const double zb = model.base_impedance();
  const double sb = model.base_kw_per_phase();

  std::sort(raw_lines.begin(), raw_lines.end(), [](const RawLine& a, const RawLine& b) { return a.line.id < b.line.id; });
  for (RawLine& raw : raw_lines) {
    raw.line.from = resolve_bus(raw.from, raw.from_pos);
    raw.line.to = resolve_bus(raw.to, raw.to_pos);
    raw.line.z /= zb;
    model.lines.push_back(std::move(raw.line));
  }
  check_unique(model.lines, "line");

  sort_by_id(model.regulators, reg_refs);
  check_unique(model.regulators, "regulator");
  for (std::size_t i = 0; i < model.regulators.size(); ++i) {
    const auto& ref = reg_refs[i];
    auto it = std::lower_bound(model.lines.begin(), model.lines.end(), ref.ref,
                               [](const Line& l, const std::string& id) { return l.id < id; });
    if (it == model.lines.end() || it->id != ref.ref)
      throw ParseError(ref.ref_pos.line, ref.ref_pos.column, "unknown line reference '" + ref.ref + "'");
    model.regulators[i].line = static_cast<std::size_t>(it - model.lines.begin());
  }

  sort_by_id(model.capacitors, cap_refs);
  check_unique(model.capacitors, "capacitor");
  for (std::size_t i = 0; i < model.capacitors.size(); ++i) {
    model.capacitors[i].bus = resolve_bus(cap_refs[i].ref, cap_refs[i].ref_pos);
    model.capacitors[i].q_rated /= sb;
  }

  sort_by_id(model.loads, load_refs);
  check_unique(model.loads, "load");
  for (std::size_t i = 0; i < model.loads.size(); ++i) {
    model.loads[i].bus = resolve_bus(load_refs[i].ref, load_refs[i].ref_pos);
    model.loads[i].p0 /= sb;
    model.loads[i].q0 /= sb;
  }

  sort_by_id(model.pvs, pv_refs);
  check_unique(model.pvs, "pv");
  for (std::size_t i = 0; i < model.pvs.size(); ++i) {
    model.pvs[i].bus = resolve_bus(pv_refs[i].ref, pv_refs[i].ref_pos);
    model.pvs[i].p_max /= sb;
    model.pvs[i].s_rated /= sb;
  }

  model.finalize();
  return model;
}

FeederModel load_feeder(const std::string& path) { return parse_feeder(read_text_file(path)); }

std::optional<std::size_t> FeederModel::find_bus(std::string_view id) const {
  auto it = std::lower_bound(buses.begin(), buses.end(), id, [](const Bus& b, std::string_view key) { return b.id < key; });
  if (it == buses.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - buses.begin());
}

std::size_t FeederModel::bus_index(std::string_view id) const {
  auto idx = find_bus(id);
  if (!idx) throw InputError("unknown bus '" + std::string(id) + "'");
  return *idx;
}

std::optional<std::size_t> FeederModel::regulator_on(std::size_t line) const { return reg_on_line_.at(line); }

void FeederModel::finalize() {
  const std::size_t n = buses.size();
  if (n == 0) throw InputError("feeder has no buses");

  std::optional<std::size_t> sub;
  for (std::size_t i = 0; i < n; ++i) {
    const Bus& b = buses[i];
    if (i > 0 && buses[i - 1].id >= b.id) throw InputError("buses must be unique and sorted by id");
    if (b.phases.empty()) throw InputError("bus '" + b.id + "' has no phases");
    if (!(b.vmin > 0.0 && b.vmin < b.vmax)) throw InputError("bus '" + b.id + "' requires 0 < VMIN < VMAX");
    if (b.is_substation) {
      if (sub) throw InputError("more than one SLACK bus ('" + buses[*sub].id + "', '" + b.id + "')");
      sub = i;
    }
  }
  if (!sub) throw InputError("no SLACK bus declared");
  substation_ = *sub;

  // Radiality: every non-substation bus has exactly one incoming line and is reachable.
  if (lines.size() != n - 1)
    throw InputError("non-radial topology: " + std::to_string(lines.size()) + " lines for " + std::to_string(n) + " buses");
  parent_line_.assign(n, static_cast<std::size_t>(-1));
  child_lines_.assign(n, {});
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const Line& line = lines[l];
    if (line.from >= n || line.to >= n || line.from == line.to) throw InputError("line '" + line.id + "' has invalid endpoints");
    if (line.to == substation_) throw InputError("non-radial topology: line '" + line.id + "' feeds the substation");
    if (parent_line_[line.to] != static_cast<std::size_t>(-1))
      throw InputError("non-radial topology: bus '" + buses[line.to].id + "' is fed by lines '" + lines[parent_line_[line.to]].id +
                       "' and '" + line.id + "'");
    parent_line_[line.to] = l;
    child_lines_[line.from].push_back(l);
  }
  for (auto& kids : child_lines_)
    std::sort(kids.begin(), kids.end(), [&](std::size_t a, std::size_t b) { return buses[lines[a].to].id < buses[lines[b].to].id; });

  order_.clear();
  std::vector<std::size_t> stack{substation_};
  while (!stack.empty()) {
    std::size_t b = stack.back();
    stack.pop_back();
    order_.push_back(b);
    const auto& kids = child_lines_[b];
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(lines[*it].to);
  }
  if (order_.size() != n) throw InputError("non-radial topology: some buses are not reachable from the substation");

  for (const Line& line : lines) {
    if (line.phases.empty()) throw InputError("line '" + line.id + "' has no phases");
    if (!line.phases.subset_of(buses[line.from].phases) || buses[line.to].phases != line.phases)
      throw InputError("phase-consistency violation on line '" + line.id + "': line phases '" + line.phases.str() +
                       "', from bus '" + buses[line.from].phases.str() + "', to bus '" + buses[line.to].phases.str() + "'");
    if (!(line.s_max > 0.0)) throw InputError("line '" + line.id + "' requires SMAX > 0");
    for (Phase p : kAllPhases) {
      for (Phase q : kAllPhases) {
        const Complex zpq = line.z(index(p), index(q));
        const bool present = line.phases.has(p) && line.phases.has(q);
        if (!present && zpq != Complex(0.0, 0.0))
          throw InputError("line '" + line.id + "' has a nonzero impedance entry on an absent phase");
        if (present && std::abs(zpq - line.z(index(q), index(p))) > 1e-9 * (1.0 + std::abs(zpq)))
          throw InputError("line '" + line.id + "' impedance matrix is not symmetric");
      }
      if (line.phases.has(p) && line.z(index(p), index(p)).real() < 0.0)
        throw InputError("line '" + line.id + "' has negative resistance");
    }
  }

  reg_on_line_.assign(lines.size(), std::nullopt);
  for (std::size_t r = 0; r < regulators.size(); ++r) {
    const Regulator& reg = regulators[r];
    if (reg.line >= lines.size()) throw InputError("regulator '" + reg.id + "' references an unknown line");
    if (reg.phases.empty() || !reg.phases.subset_of(lines[reg.line].phases))
      throw InputError("phase-consistency violation: regulator '" + reg.id + "' phases not on line '" + lines[reg.line].id + "'");
    if (reg_on_line_[reg.line]) throw InputError("line '" + lines[reg.line].id + "' carries more than one regulator");
    reg_on_line_[reg.line] = r;
  }

  loads_at_.assign(n, {});
  caps_at_.assign(n, {});
  pvs_at_.assign(n, {});
  for (std::size_t i = 0; i < capacitors.size(); ++i) {
    const CapacitorBank& cap = capacitors[i];
    if (cap.bus >= n) throw InputError("capacitor '" + cap.id + "' references an unknown bus");
    if (cap.phases.empty() || !cap.phases.subset_of(buses[cap.bus].phases))
      throw InputError("phase-consistency violation: capacitor '" + cap.id + "' phases not on bus '" + buses[cap.bus].id + "'");
    if (!(cap.q_rated > 0.0)) throw InputError("capacitor '" + cap.id + "' requires a positive rating");
    caps_at_[cap.bus].push_back(i);
  }
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const ZipLoad& load = loads[i];
    if (load.bus >= n) throw InputError("load '" + load.id + "' references an unknown bus");
    if (!buses[load.bus].phases.has(load.phase))
      throw InputError("phase-consistency violation: load '" + load.id + "' phase not on bus '" + buses[load.bus].id + "'");
    const double sp = load.kp[0] + load.kp[1] + load.kp[2];
    const double sq = load.kq[0] + load.kq[1] + load.kq[2];
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
      throw InputError("load '" + load.id + "' ZIP coefficients must sum to 1");
    loads_at_[load.bus].push_back(i);
  }
  for (std::size_t i = 0; i < pvs.size(); ++i) {
    const PvUnit& pv = pvs[i];
    if (pv.bus >= n) throw InputError("pv '" + pv.id + "' references an unknown bus");
    if (pv.phases.empty() || !pv.phases.subset_of(buses[pv.bus].phases))
      throw InputError("phase-consistency violation: pv '" + pv.id + "' phases not on bus '" + buses[pv.bus].id + "'");
    if (!(pv.p_max >= 0.0) || !(pv.s_rated > 0.0) || pv.s_rated < pv.p_max)
      throw InputError("pv '" + pv.id + "' requires 0 <= kW max <= inverter kVA");
    pvs_at_[pv.bus].push_back(i);
  }
}

namespace {

std::string fmt_double(double v) {
  // 15 digits absorb the ulp drift of the per-unit scaling, so text survives a parse/write cycle
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

std::string fmt_complex(Complex z) {
  return fmt_double(z.real()) + (std::signbit(z.imag()) ? "" : "+") + fmt_double(z.imag()) + "j";
}

} // namespace

std::string serialize_feeder(const FeederModel& model) {
  std::ostringstream out;
  const double zb = model.base_impedance();
  const double sb = model.base_kw_per_phase();
  out << "BASE " << fmt_double(model.base_mva) << ' ' << fmt_double(model.base_kv) << '\n';
  for (const Bus& b : model.buses) {
    out << "BUS " << b.id << ' ' << b.phases.str();
    if (b.is_substation) out << " SLACK";
    out << " VMIN " << fmt_double(b.vmin) << " VMAX " << fmt_double(b.vmax) << '\n';
  }
  for (const Line& l : model.lines) {
    out << "LINE " << l.id << ' ' << model.buses[l.from].id << ' ' << model.buses[l.to].id << ' ' << l.phases.str() << " Z";
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out << ' ' << fmt_complex(l.z(i, j) * zb);
    out << " SMAX " << fmt_double(l.s_max) << '\n';
  }
  for (const Regulator& r : model.regulators) {
    out << "REG " << r.id << ' ' << model.lines[r.line].id << ' ' << r.phases.str();
    if (r.gang_operated) out << " GANG";
    out << '\n';
  }
  for (const CapacitorBank& c : model.capacitors) {
    out << "CAP " << c.id << ' ' << model.buses[c.bus].id << ' ' << c.phases.str() << ' ' << fmt_double(c.q_rated * sb);
    if (c.gang_operated) out << " GANG";
    out << '\n';
  }
  for (const ZipLoad& l : model.loads) {
    out << "LOAD " << l.id << ' ' << model.buses[l.bus].id << ' ' << to_char(l.phase) << ' ' << fmt_double(l.p0 * sb) << ' '
        << fmt_double(l.q0 * sb) << " ZIP";
    for (double k : l.kp) out << ' ' << fmt_double(k);
    for (double k : l.kq) out << ' ' << fmt_double(k);
    out << '\n';
  }
  for (const PvUnit& pv : model.pvs) {
    out << "PV " << pv.id << ' ' << model.buses[pv.bus].id << ' ' << pv.phases.str() << ' ' << fmt_double(pv.p_max * sb) << ' '
        << fmt_double(pv.s_rated * sb) << " PROFILE " << pv.profile_ref << '\n';
  }
  return out.str();
}

std::vector<ChildLink> children(const FeederModel& model, std::string_view bus_id) {
  const std::size_t bus = model.bus_index(bus_id);
  std::vector<ChildLink> out;
  for (std::size_t l : model.child_lines(bus)) out.push_back({l, model.lines[l].to});
  return out;
}

Complex positive_sequence(const Line& line) {
  Complex self{0.0, 0.0}, mutual{0.0, 0.0};
  int n_self = 0, n_mutual = 0;
  for (Phase p : kAllPhases) {
    if (!line.phases.has(p)) continue;
    for (Phase q : kAllPhases) {
      if (!line.phases.has(q)) continue;
      if (p == q) {
        self += line.z(index(p), index(q));
        ++n_self;
      } else {
        mutual += line.z(index(p), index(q));
        ++n_mutual;
      }
    }
  }
  if (n_self == 0) return {0.0, 0.0};
  Complex z1 = self / static_cast<double>(n_self);
  if (n_mutual > 0) z1 -= mutual / static_cast<double>(n_mutual);
  return z1;
}

Complex thevenin_impedance(const FeederModel& model, std::size_t bus) {
  Complex z{0.0, 0.0};
  while (model.has_parent(bus)) {
    const Line& line = model.lines[model.parent_line(bus)];
    z += positive_sequence(line);
    bus = line.from;
  }
  return z;
}

Complex thevenin_impedance(const FeederModel& model, std::string_view bus_id) {
  return thevenin_impedance(model, model.bus_index(bus_id));
}

ProfileSet ProfileSet::parse_csv(std::string_view text) {
  ProfileSet set;
  std::map<std::string, std::vector<Sample>> raw;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    if (line_no == 1 && line.substr(0, 10) == "profile_id") continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos) throw ParseError(line_no, 1, "expected profile_id,timestamp_minutes,multiplier");
    Sample s{};
    if (!parse_double(line.substr(c1 + 1, c2 - c1 - 1), s.minute)) throw ParseError(line_no, c1 + 2, "invalid timestamp");
    if (!parse_double(line.substr(c2 + 1), s.multiplier)) throw ParseError(line_no, c2 + 2, "invalid multiplier");
    std::string id(line.substr(0, c1));
    if (id.empty()) throw ParseError(line_no, 1, "empty profile id");
    raw[id].push_back(s);
  }
  for (auto& [id, samples] : raw) set.add(id, std::move(samples));
  return set;
}

ProfileSet ProfileSet::load_csv(const std::string& path) { return parse_csv(read_text_file(path)); }

void ProfileSet::add(const std::string& id, std::vector<Sample> samples) {
  std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.minute < b.minute; });
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].minute == samples[i - 1].minute) throw InputError("profile '" + id + "' repeats a timestamp");
  if (samples.empty()) throw InputError("profile '" + id + "' is empty");
  series_[id] = std::move(samples);
}

double ProfileSet::value(const std::string& id, double minute) const {
  auto it = series_.find(id);
  if (it == series_.end()) throw InputError("unknown profile '" + id + "'");
  const auto& s = it->second;
  if (minute <= s.front().minute) return s.front().multiplier;
  if (minute >= s.back().minute) return s.back().multiplier;
  auto hi = std::upper_bound(s.begin(), s.end(), minute, [](double m, const Sample& x) { return m < x.minute; });
  auto lo = hi - 1;
  const double w = (minute - lo->minute) / (hi->minute - lo->minute);
  return lo->multiplier + w * (hi->multiplier - lo->multiplier);
}

void check_profile_refs(const FeederModel& model, const ProfileSet& profiles) {
  for (const PvUnit& pv : model.pvs)
    if (!profiles.contains(pv.profile_ref))
      throw InputError("pv '" + pv.id + "' references missing profile '" + pv.profile_ref + "'");
}

} // namespace cvr
