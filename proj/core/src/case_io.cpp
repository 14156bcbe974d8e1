#include "gridsec/case_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "gridsec/rng.hpp"

namespace gridsec {

using nlohmann::json;

int GridCase::bus_index(int bus_id) const {
  for (int i = 0; i < n_buses(); ++i) {
    if (buses[i].id == bus_id) return i;
  }
  throw CaseError("unknown bus id " + std::to_string(bus_id));
}

void validate(const GridCase& gc) {
  if (gc.buses.empty()) throw CaseError("case has no buses");
  if (gc.base_mva <= 0.0) throw CaseError("base_mva must be positive");

  std::unordered_map<int, int> index;
  for (int i = 0; i < gc.n_buses(); ++i) {
    const auto& b = gc.buses[i];
    if (!std::isfinite(b.base_load))
      throw CaseError("bus " + std::to_string(b.id) + ": base_load not finite");
    if (!index.emplace(b.id, i).second)
      throw CaseError("duplicate bus id " + std::to_string(b.id));
  }

  for (const auto& br : gc.branches) {
    if (!index.count(br.from_bus) || !index.count(br.to_bus))
      throw CaseError("branch " + std::to_string(br.id) +
                      ": endpoint references unknown bus");
    if (br.from_bus == br.to_bus)
      throw CaseError("branch " + std::to_string(br.id) + ": self-loop");
    if (!(br.reactance > 0.0))
      throw CaseError("branch " + std::to_string(br.id) +
                      ": nonpositive reactance");
  }

  if (!index.count(gc.slack_bus))
    throw CaseError("slack_bus " + std::to_string(gc.slack_bus) +
                    " is not a valid bus identifier");

  // Connectivity over the undirected graph.
  std::vector<std::vector<int>> adj(gc.n_buses());
  for (const auto& br : gc.branches) {
    const int a = index[br.from_bus], b = index[br.to_bus];
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(gc.n_buses(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        q.push(w);
      }
    }
  }
  if (reached != gc.n_buses()) throw CaseError("disconnected graph");
}

namespace {

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  int line = 1;
  int col = 1;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }

  void advance() {
    if (text[pos] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++pos;
  }

  void skip_ws_and_comments() {
    while (!done()) {
      const char c = peek();
      if (c == '%') {
        while (!done() && peek() != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
        advance();
      } else {
        break;
      }
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw CaseError("syntax error at line " + std::to_string(line) +
                    ", column " + std::to_string(col) + ": " + what);
  }
};

double parse_number(Cursor& cur) {
  cur.skip_ws_and_comments();
  if (cur.done()) cur.fail("expected number, got end of input");
  const char* begin = cur.text.data() + cur.pos;
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin) cur.fail("expected number");
  const std::size_t used = static_cast<std::size_t>(end - begin);
  for (std::size_t i = 0; i < used; ++i) cur.advance();
  return v;
}

// Rows of numbers between '[' and ']', rows ended by ';' or newline.
std::vector<std::vector<double>> parse_matrix(Cursor& cur) {
  cur.skip_ws_and_comments();
  if (cur.done() || cur.peek() != '[') cur.fail("expected '['");
  cur.advance();
  std::vector<std::vector<double>> rows;
  std::vector<double> row;
  while (true) {
    // Skip spaces and comments but notice row breaks.
    while (!cur.done()) {
      const char c = cur.peek();
      if (c == '%') {
        while (!cur.done() && cur.peek() != '\n') cur.advance();
      } else if (c == ';' || c == '\n') {
        if (!row.empty()) {
          rows.push_back(std::move(row));
          row.clear();
        }
        cur.advance();
      } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
        cur.advance();
      } else {
        break;
      }
    }
    if (cur.done()) cur.fail("unterminated matrix");
    if (cur.peek() == ']') {
      cur.advance();
      if (!row.empty()) rows.push_back(std::move(row));
      return rows;
    }
    row.push_back(parse_number(cur));
  }
}

}  // namespace

GridCase parse_matpower_case(std::string_view text,
                             const std::string& default_name) {
  GridCase gc;
  gc.case_name = default_name;

  bool have_base = false, have_bus = false, have_branch = false;
  std::vector<std::vector<double>> bus_rows, branch_rows;

  Cursor cur{text};
  while (!cur.done()) {
    cur.skip_ws_and_comments();
    if (cur.done()) break;

    // Read one identifier-ish token up to '=' or whitespace.
    std::size_t start = cur.pos;
    while (!cur.done()) {
      const char c = cur.peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
          c == '_') {
        cur.advance();
      } else {
        break;
      }
    }
    std::string token(text.substr(start, cur.pos - start));
    if (token.empty()) {
      cur.advance();
      continue;
    }

    if (token == "function") {
      // "function mpc = caseNN" -- take the case name from the tail.
      std::size_t line_end = text.find('\n', cur.pos);
      std::string rest(text.substr(
          cur.pos, line_end == std::string_view::npos ? std::string_view::npos
                                                      : line_end - cur.pos));
      auto eq = rest.rfind('=');
      if (eq != std::string::npos) {
        std::string name = rest.substr(eq + 1);
        name.erase(std::remove_if(name.begin(), name.end(),
                                  [](unsigned char c) {
                                    return std::isspace(c) || c == ';';
                                  }),
                   name.end());
        if (!name.empty()) gc.case_name = name;
      }
      while (!cur.done() && cur.peek() != '\n') cur.advance();
      continue;
    }

    cur.skip_ws_and_comments();
    if (cur.done() || cur.peek() != '=') continue;
    cur.advance();  // '='

    if (token == "mpc.baseMVA") {
      gc.base_mva = parse_number(cur);
      have_base = true;
    } else if (token == "mpc.bus") {
      bus_rows = parse_matrix(cur);
      have_bus = true;
    } else if (token == "mpc.branch") {
      branch_rows = parse_matrix(cur);
      have_branch = true;
    } else {
      // Skip the value of any other assignment (scalar, string or matrix).
      cur.skip_ws_and_comments();
      if (!cur.done() && cur.peek() == '[') {
        parse_matrix(cur);
      } else {
        while (!cur.done() && cur.peek() != ';' && cur.peek() != '\n')
          cur.advance();
      }
    }
  }

  if (!have_base) throw CaseError("missing mpc.baseMVA");
  if (!have_bus) throw CaseError("missing mpc.bus");
  if (!have_branch) throw CaseError("missing mpc.branch");

  int slack_count = 0;
  for (const auto& row : bus_rows) {
    if (row.size() < 3) throw CaseError("bus row has fewer than 3 columns");
    BusRecord b;
    b.id = static_cast<int>(row[0]);
    b.base_load = row[2] / gc.base_mva;  // PD in MW -> p.u.
    if (static_cast<int>(row[1]) == 3) {
      gc.slack_bus = b.id;
      ++slack_count;
    }
    gc.buses.push_back(b);
  }
  if (slack_count == 0) throw CaseError("no slack bus (type 3) in case");
  if (slack_count > 1) throw CaseError("multiple slack buses in case");

  int next_id = 0;
  for (const auto& row : branch_rows) {
    if (row.size() < 4) throw CaseError("branch row has fewer than 4 columns");
    const bool in_service = row.size() < 11 || row[10] != 0.0;
    if (!in_service) continue;
    BranchRecord br;
    br.id = next_id++;
    br.from_bus = static_cast<int>(row[0]);
    br.to_bus = static_cast<int>(row[1]);
    br.reactance = row[3];
    gc.branches.push_back(br);
  }

  validate(gc);
  return gc;
}

GridCase parse_json_case(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CaseError(std::string("JSON parse error: ") + e.what());
  }
  for (const char* key :
       {"case_name", "base_mva", "buses", "branches", "slack_bus"}) {
    if (!j.contains(key))
      throw CaseError(std::string("schema error: missing \"") + key + "\"");
  }
  GridCase gc;
  try {
    gc.case_name = j.at("case_name").get<std::string>();
    gc.base_mva = j.at("base_mva").get<double>();
    gc.slack_bus = j.at("slack_bus").get<int>();
    for (const auto& jb : j.at("buses")) {
      BusRecord b;
      b.id = jb.at("id").get<int>();
      b.base_load = jb.at("base_load").get<double>();
      gc.buses.push_back(b);
    }
    for (const auto& jb : j.at("branches")) {
      BranchRecord br;
      br.id = jb.at("id").get<int>();
      br.from_bus = jb.at("from").get<int>();
      br.to_bus = jb.at("to").get<int>();
      br.reactance = jb.at("x").get<double>();
      gc.branches.push_back(br);
    }
  } catch (const json::exception& e) {
    throw CaseError(std::string("schema error: ") + e.what());
  }
  std::sort(gc.branches.begin(), gc.branches.end(),
            [](const BranchRecord& a, const BranchRecord& b) {
              return a.id < b.id;
            });
  for (int i = 0; i < gc.n_branches(); ++i) {
    if (gc.branches[i].id != i)
      throw CaseError("branch ids must be a dense 0..m-1 range");
  }
  validate(gc);
  return gc;
}

std::string write_json_case(const GridCase& gc) {
  json j;
  j["case_name"] = gc.case_name;
  j["base_mva"] = gc.base_mva;
  j["slack_bus"] = gc.slack_bus;
  j["buses"] = json::array();
  for (const auto& b : gc.buses)
    j["buses"].push_back({{"id", b.id}, {"base_load", b.base_load}});
  j["branches"] = json::array();
  for (const auto& br : gc.branches)
    j["branches"].push_back({{"id", br.id},
                             {"from", br.from_bus},
                             {"to", br.to_bus},
                             {"x", br.reactance}});
  return j.dump(2) + "\n";
}

LoadProfile load_profile_csv(std::string_view text) {
  LoadProfile profile;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Trim.
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    std::string tok = line.substr(first, last - first + 1);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      if (lineno == 1 && profile.scale_factors.empty()) continue;  // header
      throw CaseError("profile line " + std::to_string(lineno) +
                      ": not a number: \"" + tok + "\"");
    }
    if (!(v > 0.0))
      throw CaseError("profile line " + std::to_string(lineno) +
                      ": nonpositive scale factor");
    profile.scale_factors.push_back(v);
  }
  if (profile.scale_factors.empty()) throw CaseError("empty load profile");
  return profile;
}

std::string write_profile_csv(const LoadProfile& profile) {
  std::string out;
  char buf[32];
  for (double v : profile.scale_factors) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out += buf;
  }
  return out;
}

LoadProfile synthetic_profile(int length, std::uint64_t seed, double amplitude,
                              double jitter) {
  if (length < 1) throw CaseError("profile length must be >= 1");
  LoadProfile profile;
  profile.scale_factors.reserve(length);
  Rng rng(seed);
  constexpr double kPi = 3.14159265358979323846;
  constexpr int kPeriod = 96;  // one synthetic day at 15-min resolution
  for (int t = 0; t < length; ++t) {
    const double base =
        1.0 + amplitude * std::sin(2.0 * kPi * (t % kPeriod) / kPeriod);
    const double v = base + rng.uniform(-jitter, jitter);
    profile.scale_factors.push_back(std::max(v, 0.05));
  }
  return profile;
}

}  // namespace gridsec
