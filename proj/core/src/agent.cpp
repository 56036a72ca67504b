#include "crucible/agent.hpp"

namespace crucible::agent {

using audit::EventKind;

std::string_view to_string(PlanOutcome::Status status) {
  switch (status) {
    case PlanOutcome::Status::completed: return "completed";
    case PlanOutcome::Status::blocked: return "blocked";
    case PlanOutcome::Status::failed: return "failed";
  }
  return "?";
}

Json to_json(const PlanOutcome& o) {
  Json j{{"status", to_string(o.status)}};
  if (o.status != PlanOutcome::Status::completed) j["step"] = o.step;
  if (o.status == PlanOutcome::Status::blocked) {
    j["reason"] = o.reason;
    j["rule"] = o.reason == "consent" ? std::string("consent") : std::string(policy::to_string(o.rule));
    j["error"] = wire::error_to_json(*denial_error(o));
  }
  if (o.status == PlanOutcome::Status::failed) j["error"] = o.error;
  return j;
}

std::optional<wire::ErrorObject> denial_error(const PlanOutcome& o) {
  if (o.status != PlanOutcome::Status::blocked) return std::nullopt;
  if (o.reason == "consent") return wire::ErrorObject{wire::ErrorCode::consent_denied, "consent denied"};
  return wire::ErrorObject{wire::ErrorCode::policy_denied,
                           "policy denied (" + std::string(policy::to_string(o.rule)) + ")"};
}

namespace {

PlanOutcome blocked(int step, std::string reason, policy::Rule rule = policy::Rule::none) {
  PlanOutcome o;
  o.status = PlanOutcome::Status::blocked;
  o.step = step;
  o.reason = std::move(reason);
  o.rule = rule;
  return o;
}

PlanOutcome failed(int step, std::string error) {
  PlanOutcome o;
  o.status = PlanOutcome::Status::failed;
  o.step = step;
  o.error = std::move(error);
  return o;
}

Json taints_json(const Taints& taints) {
  Json out = Json::array();
  for (const auto& t : taints) out.push_back(t);
  return out;
}

}  // namespace

Agent::Agent(std::map<std::string, transport::Connection*, std::less<>> connections, ConsentPolicy consent,
             PolicyHook policy, audit::AuditLog& log, const ConsentChannel* channel)
    : connections_(std::move(connections)),
      consent_(std::move(consent)),
      policy_(std::move(policy)),
      log_(log),
      channel_(channel) {}

transport::Connection* Agent::connection(const std::string& server_id) {
  auto it = connections_.find(server_id);
  return it == connections_.end() ? nullptr : it->second;
}

PlanOutcome Agent::record_outcome(PlanOutcome outcome, const ExecutionContext& ctx) {
  Json payload = to_json(outcome);
  payload["origin"] = ctx.origin_server;
  log_.record(EventKind::plan_outcome, std::move(payload));
  return outcome;
}

std::optional<PlanOutcome> Agent::discover(const std::string& server_id, int step, const ExecutionContext& ctx) {
  if (discovered_.count(server_id)) return std::nullopt;

  // Listing another server's tools is the first cross-server act of a plan,
  // so it goes through the consent gate. The origin's own tools do not.
  if (server_id != ctx.origin_server) {
    ToolInvocation listing{server_id, "tools/list", Json::object(), {}};
    ConsentDecision decision = consent_decide(consent_, listing, channel_);
    log_.record(EventKind::consent_decision, {{"step", step},
                                              {"server_id", server_id},
                                              {"tool", "tools/list"},
                                              {"args_taints", Json::array()},
                                              {"mode", to_string(consent_.mode)},
                                              {"decision", to_string(decision)}});
    if (decision == ConsentDecision::deny) return blocked(step, "consent");
  }

  Json listing = connection(server_id)->request(mcp::method::tools_list);
  std::set<std::string> names;
  Json names_json = Json::array();
  for (const auto& tool : listing.value("tools", Json::array())) {
    names.insert(tool.value("name", std::string()));
    names_json.push_back(tool.value("name", std::string()));
  }
  discovered_[server_id] = std::move(names);
  log_.record(EventKind::discovery, {{"step", step}, {"server_id", server_id}, {"tools", std::move(names_json)}});
  return std::nullopt;
}

PlanOutcome Agent::execute_plan(const std::vector<Directive>& directives, ExecutionContext& ctx) {
  for (const Directive& d : directives) {
    transport::Connection* conn = connection(d.server_id);
    if (conn == nullptr) return record_outcome(failed(d.step, "no connection to server '" + d.server_id + "'"), ctx);

    try {
      if (auto stop = discover(d.server_id, d.step, ctx)) return record_outcome(*stop, ctx);
    } catch (const std::exception& ex) {
      return record_outcome(failed(d.step, std::string("discovery failed: ") + ex.what()), ctx);
    }
    if (!discovered_[d.server_id].count(d.tool))
      return record_outcome(failed(d.step, "server '" + d.server_id + "' does not advertise '" + d.tool + "'"), ctx);

    TaintedValue args;
    try {
      args = substitute(d.args_template, ctx.results);
    } catch (const UnresolvedPlaceholder& ex) {
      return record_outcome(failed(d.step, ex.what()), ctx);
    }

    policy::PolicyVerdict verdict = policy_ ? policy_({ctx.origin_server, d.server_id, d.tool, args.taints})
                                            : policy::PolicyVerdict::allow();
    Json verdict_payload = policy::to_json(verdict);
    verdict_payload.update(Json{{"step", d.step},
                                {"origin", ctx.origin_server},
                                {"server_id", d.server_id},
                                {"tool", d.tool},
                                {"args_taints", taints_json(args.taints)}});
    log_.record(EventKind::policy_verdict, std::move(verdict_payload));
    if (!verdict.allowed()) return record_outcome(blocked(d.step, "policy", verdict.rule), ctx);

    ToolInvocation invocation{d.server_id, d.tool, args.value, args.taints};
    ConsentDecision decision;
    try {
      decision = consent_decide(consent_, invocation, channel_);
    } catch (const InteractiveUnavailable& ex) {
      return record_outcome(failed(d.step, ex.what()), ctx);
    }
    log_.record(EventKind::consent_decision, {{"step", d.step},
                                              {"server_id", d.server_id},
                                              {"tool", d.tool},
                                              {"args_taints", taints_json(args.taints)},
                                              {"mode", to_string(consent_.mode)},
                                              {"decision", to_string(decision)}});
    if (decision == ConsentDecision::deny) return record_outcome(blocked(d.step, "consent"), ctx);

    Taints result_taints = args.taints;
    result_taints.insert(d.server_id);
    log_.annotate_next_in(d.server_id, {{"step", d.step},
                                        {"origin", ctx.origin_server},
                                        {"tool", d.tool},
                                        {"taints", taints_json(result_taints)}});
    Json result;
    try {
      result = conn->request(mcp::method::tools_call, {{"name", d.tool}, {"arguments", args.value}});
    } catch (const std::exception& ex) {
      log_.discard_annotation(d.server_id);
      if (after_call_) after_call_();
      return record_outcome(failed(d.step, ex.what()), ctx);
    }
    ctx.results[d.step] = {result.value("content", Json()), std::move(result_taints)};
    if (after_call_) after_call_();
  }
  return record_outcome(PlanOutcome::completed(), ctx);
}

PlanOutcome Agent::run_prompt(const std::string& server_id, const std::string& prompt, const Json& args) {
  ExecutionContext ctx{server_id, {}};
  transport::Connection* conn = connection(server_id);
  if (conn == nullptr) return record_outcome(failed(0, "no connection to server '" + server_id + "'"), ctx);

  std::vector<Directive> plan;
  try {
    Json reply = conn->request(mcp::method::prompts_get, {{"name", prompt}, {"arguments", args}});
    plan = parse_directives(reply.value("text", std::string()));
  } catch (const std::exception& ex) {
    return record_outcome(failed(0, ex.what()), ctx);
  }
  return execute_plan(plan, ctx);
}

PlanOutcome Agent::run_tool(const std::string& server_id, const std::string& tool, const Json& args) {
  ExecutionContext ctx{server_id, {}};
  return execute_plan({Directive{1, server_id, tool, args}}, ctx);
}

}  // namespace crucible::agent
