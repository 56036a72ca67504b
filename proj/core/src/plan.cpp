#include <charconv>
#include <regex>

#include "crucible/agent.hpp"
#include "crucible/servers.hpp"

namespace crucible::agent {

namespace {

const std::regex& directive_pattern() {
  static const std::regex re(R"(^STEP\s+(\d+):\s+CALL\s+([a-z0-9_-]+)/([a-z0-9_.]+)\s+ARGS\s+(\{.*\})\s*$)");
  return re;
}

const std::regex& placeholder_pattern() {
  static const std::regex re(R"(\$\{step(\d+)(?:\.([^}]*))?\})");
  return re;
}

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& digits, int line) {
  int v = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || p != digits.data() + digits.size()) throw PlanSyntaxError(line, "step number out of range");
  return v;
}

void collect_refs(const Json& v, std::vector<int>& out) {
  if (v.is_string()) {
    const std::string& s = v.get_ref<const std::string&>();
    for (std::sregex_iterator it(s.begin(), s.end(), placeholder_pattern()), end; it != end; ++it) {
      try {
        out.push_back(std::stoi((*it)[1].str()));
      } catch (const std::out_of_range&) {
        out.push_back(-1);
      }
    }
  } else if (v.is_structured()) {
    for (const auto& child : v) collect_refs(child, out);
  }
}

const Json* resolve_path(const Json& root, const std::string& path) {
  const Json* cur = &root;
  if (path.empty()) return cur;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    auto dot = path.find('.', pos);
    std::string seg = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (cur->is_object()) {
      auto it = cur->find(seg);
      if (it == cur->end()) return nullptr;
      cur = &*it;
    } else if (cur->is_array()) {
      std::size_t idx = 0;
      auto [p, ec] = std::from_chars(seg.data(), seg.data() + seg.size(), idx);
      if (seg.empty() || ec != std::errc() || p != seg.data() + seg.size() || idx >= cur->size()) return nullptr;
      cur = &(*cur)[idx];
    } else {
      return nullptr;
    }
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return cur;
}

struct Resolver {
  const StepResults& results;
  Taints taints;

  const Json& lookup(const std::smatch& m) {
    const std::string token = m[0].str();
    int step = 0;
    try {
      step = std::stoi(m[1].str());
    } catch (const std::exception&) {
      throw UnresolvedPlaceholder(token);
    }
    auto it = results.find(step);
    if (it == results.end()) throw UnresolvedPlaceholder(token);
    const Json* value = resolve_path(it->second.value, m[2].matched ? m[2].str() : std::string());
    if (value == nullptr) throw UnresolvedPlaceholder(token);
    taints.insert(it->second.taints.begin(), it->second.taints.end());
    return *value;
  }

  Json apply(const Json& v) {
    if (v.is_object()) {
      Json out = Json::object();
      for (const auto& [k, child] : v.items()) out[k] = apply(child);
      return out;
    }
    if (v.is_array()) {
      Json out = Json::array();
      for (const auto& child : v) out.push_back(apply(child));
      return out;
    }
    if (!v.is_string()) return v;

    const std::string& s = v.get_ref<const std::string&>();
    std::smatch m;
    if (std::regex_match(s, m, placeholder_pattern())) return lookup(m);

    std::string out;
    auto begin = s.cbegin();
    bool any = false;
    for (std::sregex_iterator it(s.begin(), s.end(), placeholder_pattern()), end; it != end; ++it) {
      any = true;
      const Json& value = lookup(*it);
      out.append(begin, (*it)[0].first);
      out += value.is_string() ? value.get<std::string>() : value.dump();
      begin = (*it)[0].second;
    }
    if (!any) return v;
    out.append(begin, s.cend());
    return out;
  }
};

}  // namespace

std::vector<Directive> parse_directives(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }

  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]) != servers::kPlanBegin) ++i;
  if (i == lines.size()) return {};

  std::vector<Directive> plan;
  bool closed = false;
  for (++i; i < lines.size(); ++i) {
    const int lineno = static_cast<int>(i) + 1;
    std::string line(trim(lines[i]));
    if (line == servers::kPlanEnd) {
      closed = true;
      break;
    }
    if (line.empty()) continue;

    std::smatch m;
    if (!std::regex_match(line, m, directive_pattern()))
      throw PlanSyntaxError(lineno, "expected 'STEP <n>: CALL <server>/<tool> ARGS <json-object>'");

    Directive d;
    d.step = to_int(m[1].str(), lineno);
    d.server_id = m[2].str();
    d.tool = m[3].str();
    try {
      d.args_template = Json::parse(m[4].str());
    } catch (const Json::exception& ex) {
      throw PlanSyntaxError(lineno, std::string("ARGS is not valid JSON: ") + ex.what());
    }
    if (!d.args_template.is_object()) throw PlanSyntaxError(lineno, "ARGS must be a JSON object");
    if (d.step < 1) throw PlanSyntaxError(lineno, "step numbers start at 1");
    if (!plan.empty() && d.step <= plan.back().step)
      throw PlanSyntaxError(lineno, "STEP " + std::to_string(d.step) + " does not follow STEP " +
                                        std::to_string(plan.back().step));

    std::vector<int> refs;
    collect_refs(d.args_template, refs);
    for (int ref : refs) {
      bool earlier = std::any_of(plan.begin(), plan.end(), [&](const Directive& p) { return p.step == ref; });
      if (!earlier)
        throw PlanSyntaxError(lineno, "placeholder refers to step " + std::to_string(ref) +
                                          ", which is not an earlier step");
    }
    plan.push_back(std::move(d));
  }
  if (!closed) throw PlanSyntaxError(static_cast<int>(lines.size()), "missing " + std::string(servers::kPlanEnd));
  return plan;
}

TaintedValue substitute(const Json& args_template, const StepResults& results) {
  Resolver r{results, {}};
  Json value = r.apply(args_template);
  return {std::move(value), std::move(r.taints)};
}

}  // namespace crucible::agent
