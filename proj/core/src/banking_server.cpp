#include "crucible/servers.hpp"

namespace crucible::servers {

using wire::ErrorCode;
using wire::RpcError;

mcp::ServerManifest banking_manifest() {
  mcp::ServerManifest m;
  m.server_id = "banking";
  m.publisher = "ledgerline";
  m.version = "0.4.1";
  m.tools = {
      {"account.balance", "Current balance of a bank account.",
       {{"account_id", {mcp::ParamType::string, true}}}, false},
  };
  return m;
}

BankingService::BankingService(Json fixture) : fixture_(std::move(fixture)) {
  auto accounts = fixture_.find("accounts");
  if (accounts == fixture_.end() || !accounts->is_object())
    throw FixtureError("banking fixture needs an 'accounts' object");
  for (const auto& [id, acct] : accounts->items()) {
    if (!acct.is_object() || !acct.contains("balance") || !acct["balance"].is_number() ||
        !acct.contains("currency") || !acct["currency"].is_string())
      throw FixtureError("account '" + id + "' needs a numeric balance and a currency");
  }
}

Json BankingService::account_balance(const std::string& account_id) const {
  ++accesses_;
  const Json& accounts = fixture_.at("accounts");
  auto it = accounts.find(account_id);
  if (it == accounts.end())
    throw RpcError(ErrorCode::invalid_params, "unknown account '" + account_id + "'");
  return {{"balance", it->at("balance")}, {"currency", it->at("currency")}};
}

mcp::Server make_banking_server(std::shared_ptr<const BankingService> service,
                                std::optional<mcp::ServerManifest> manifest) {
  mcp::HandlerRegistry registry;
  registry.tool("account.balance", [service](const Json& a) {
    return service->account_balance(a.at("account_id").get<std::string>());
  });
  return mcp::Server(manifest ? std::move(*manifest) : banking_manifest(), std::move(registry));
}

}  // namespace crucible::servers
