#include "polyswarm/persistence.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <set>

#include "polyswarm/errors.hpp"

namespace polyswarm {

std::string_view to_string(Table t) {
  switch (t) {
    case Table::snapshots: return "snapshots";
    case Table::predictions: return "predictions";
    case Table::consensus: return "consensus";
    case Table::signals: return "signals";
    case Table::trades: return "trades";
    case Table::risk_days: return "risk_days";
    case Table::commands: return "commands";
  }
  return "snapshots";
}

Table table_from_string(std::string_view s) {
  for (auto t : kAllTables) {
    if (to_string(t) == s) return t;
  }
  throw ValidationError("unknown table: " + std::string(s));
}

void to_json(Json& j, const ConsensusRecord& r) {
  j = Json{{"cycle_id", r.cycle_id}, {"consensus", r.consensus}, {"divergence", r.divergence}};
}

void from_json(const Json& j, ConsensusRecord& r) {
  r.cycle_id = j.at("cycle_id").get<std::uint64_t>();
  r.consensus = j.at("consensus").get<SwarmConsensus>();
  const auto& d = j.at("divergence");
  const auto num = [&](const char* k) {
    const auto& v = d.at(k);
    return v.is_null() ? kInfiniteDivergence : v.get<double>();
  };
  r.divergence.market_id = d.at("market_id").get<std::string>();
  r.divergence.kl_swarm_vs_market = num("kl_swarm_vs_market");
  r.divergence.kl_market_vs_swarm = num("kl_market_vs_swarm");
  r.divergence.js = d.at("js").get<double>();
  r.divergence.priority_score = d.at("priority_score").get<double>();
  if (r.divergence.js < 0.0 || r.divergence.js > std::log(2.0) + 1e-12) throw ValidationError("js out of range");
}

void to_json(Json& j, const RiskRecord& r) { j = Json{{"state", r.state}, {"reason", r.reason}, {"at", r.at}}; }

void from_json(const Json& j, RiskRecord& r) {
  r.state = j.at("state").get<RiskState>();
  r.reason = j.at("reason").get<std::string>();
  r.at = j.at("at").get<TimestampMs>();
}

void to_json(Json& j, const StoredRecord& r) {
  j = Json{{"table", to_string(r.table)}, {"seq", r.seq},       {"ts_ms", r.ts},
           {"market_id", r.market_id},    {"source", r.source}, {"payload", r.payload}};
}

void validate_payload(Table table, const Json& payload) {
  try {
    switch (table) {
      case Table::snapshots: (void)payload.get<MarketSnapshot>(); break;
      case Table::predictions: (void)payload.get<AgentPrediction>(); break;
      case Table::consensus: (void)payload.get<ConsensusRecord>(); break;
      case Table::signals: (void)payload.get<ArbitrageSignal>(); break;
      case Table::trades: (void)payload.get<LedgerEvent>(); break;
      case Table::risk_days: (void)payload.get<RiskRecord>(); break;
      case Table::commands: (void)payload.get<ControlCommand>(); break;
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(std::string(to_string(table)) + " record rejected: " + e.what());
  }
}

namespace {

void check(int rc, sqlite3* db, const char* what) {
  if (rc != SQLITE_OK && rc != SQLITE_DONE && rc != SQLITE_ROW) {
    throw StorageError(std::string(what) + ": " + (db ? sqlite3_errmsg(db) : sqlite3_errstr(rc)));
  }
}

void exec(sqlite3* db, const std::string& sql) {
  char* err = nullptr;
  const int rc = sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err);
  if (rc != SQLITE_OK) {
    std::string msg = err ? err : sqlite3_errstr(rc);
    sqlite3_free(err);
    throw StorageError("sqlite: " + msg + " in: " + sql);
  }
}

class Statement {
 public:
  Statement(sqlite3* db, const std::string& sql) : db_(db) {
    check(sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr), db, "prepare");
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  void bind(int idx, std::int64_t v) { check(sqlite3_bind_int64(stmt_, idx, v), db_, "bind"); }
  void bind(int idx, const std::string& v) {
    check(sqlite3_bind_text(stmt_, idx, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT), db_, "bind");
  }
  bool step() {
    const int rc = sqlite3_step(stmt_);
    check(rc, db_, "step");
    return rc == SQLITE_ROW;
  }
  std::int64_t int_col(int i) const { return sqlite3_column_int64(stmt_, i); }
  std::string text_col(int i) const {
    const auto* p = sqlite3_column_text(stmt_, i);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, i)))
             : std::string();
  }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

sqlite3* open_db(const std::string& path, bool readonly) {
  sqlite3* db = nullptr;
  const int flags = (readonly ? SQLITE_OPEN_READONLY : (SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE)) |
                    SQLITE_OPEN_FULLMUTEX;
  const int rc = sqlite3_open_v2(path.c_str(), &db, flags, nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : sqlite3_errstr(rc);
    sqlite3_close(db);
    throw StorageError("cannot open store " + path + ": " + msg);
  }
  sqlite3_busy_timeout(db, 5000);
  return db;
}

StoredRecord read_row(const Statement& st, Table table) {
  StoredRecord r;
  r.table = table;
  r.seq = st.int_col(0);
  r.ts = st.int_col(1);
  r.market_id = st.text_col(2);
  r.source = st.text_col(3);
  r.payload = Json::parse(st.text_col(4));
  return r;
}

}  // namespace

Store::Store(const std::string& path) : path_(path) {
  writer_ = open_db(path, false);
  try {
    if (path != ":memory:") exec(writer_, "PRAGMA journal_mode=WAL;");
    exec(writer_, "PRAGMA synchronous=FULL;");
    for (auto t : kAllTables) {
      const std::string name(to_string(t));
      exec(writer_, "CREATE TABLE IF NOT EXISTS " + name +
                        " (seq INTEGER PRIMARY KEY, ts_ms INTEGER NOT NULL, market_id TEXT NOT NULL, "
                        "source TEXT NOT NULL, payload TEXT NOT NULL);");
      exec(writer_, "CREATE INDEX IF NOT EXISTS " + name + "_ts ON " + name + " (ts_ms);");
      exec(writer_, "CREATE INDEX IF NOT EXISTS " + name + "_market ON " + name + " (market_id);");
      Statement st(writer_, "SELECT COALESCE(MAX(seq), 0) FROM " + name + ";");
      if (st.step()) next_seq_ = std::max(next_seq_, st.int_col(0) + 1);
    }
    reader_ = path == ":memory:" ? writer_ : open_db(path, true);
  } catch (...) {
    sqlite3_close(writer_);
    throw;
  }
}

Store::~Store() {
  if (reader_ && reader_ != writer_) sqlite3_close(reader_);
  sqlite3_close(writer_);
}

std::int64_t Store::append(Table table, TimestampMs ts, const std::string& market_id, const std::string& source,
                           const Json& payload) {
  validate_payload(table, payload);
  const std::string body = payload.dump();
  std::lock_guard lock(write_mu_);
  const std::int64_t seq = next_seq_;
  Statement st(writer_, "INSERT INTO " + std::string(to_string(table)) +
                            " (seq, ts_ms, market_id, source, payload) VALUES (?, ?, ?, ?, ?);");
  st.bind(1, seq);
  st.bind(2, ts);
  st.bind(3, market_id);
  st.bind(4, source);
  st.bind(5, body);
  st.step();
  ++next_seq_;
  return seq;
}

std::int64_t Store::append(const MarketSnapshot& s) {
  return append(Table::snapshots, s.observed_at, s.market_id, "marketdata", Json(s));
}
std::int64_t Store::append(const AgentPrediction& p) {
  return append(Table::predictions, p.created_at, p.market_id, p.persona_id, Json(p));
}
std::int64_t Store::append(const ConsensusRecord& c) {
  return append(Table::consensus, c.consensus.decided_at, c.consensus.market_id, "swarm", Json(c));
}
std::int64_t Store::append(const ArbitrageSignal& s) {
  return append(Table::signals, s.detected_at, s.market_ids.empty() ? std::string() : s.market_ids.front(),
                std::string(to_string(s.kind)), Json(s));
}
std::int64_t Store::append(const LedgerEvent& e) {
  return append(Table::trades, e.at, e.trade.order.market_id, std::string(to_string(e.type)), Json(e));
}
std::int64_t Store::append(const RiskRecord& r) { return append(Table::risk_days, r.at, "", r.reason, Json(r)); }
std::int64_t Store::append(const ControlCommand& c) {
  return append(Table::commands, c.issued_at, c.market_id.value_or(""), std::string(to_string(c.kind)), Json(c));
}

std::vector<StoredRecord> Store::run_query(sqlite3* db, const std::string& sql,
                                           const std::vector<std::string>& text_args,
                                           const std::vector<std::int64_t>& int_args, Table table) const {
  Statement st(db, sql);
  int idx = 1;
  for (auto v : int_args) st.bind(idx++, v);
  for (const auto& v : text_args) st.bind(idx++, v);
  std::vector<StoredRecord> out;
  while (st.step()) out.push_back(read_row(st, table));
  return out;
}

std::vector<StoredRecord> Store::query(Table table, const RecordQuery& q) const {
  std::string sql = "SELECT seq, ts_ms, market_id, source, payload FROM " + std::string(to_string(table)) +
                    " WHERE 1=1";
  std::vector<std::int64_t> ints;
  std::vector<std::string> texts;
  if (q.from_ts) {
    sql += " AND ts_ms >= ?";
    ints.push_back(*q.from_ts);
  }
  if (q.to_ts) {
    sql += " AND ts_ms <= ?";
    ints.push_back(*q.to_ts);
  }
  if (q.from_seq) {
    sql += " AND seq >= ?";
    ints.push_back(*q.from_seq);
  }
  if (q.market_id) {
    sql += " AND market_id = ?";
    texts.push_back(*q.market_id);
  }
  if (q.source) {
    sql += " AND source = ?";
    texts.push_back(*q.source);
  }
  sql += " ORDER BY seq;";
  std::scoped_lock lock(read_mu_);
  if (reader_ == writer_) {
    std::lock_guard wlock(write_mu_);
    return run_query(reader_, sql, texts, ints, table);
  }
  return run_query(reader_, sql, texts, ints, table);
}

std::vector<StoredRecord> Store::replay(std::int64_t from_seq) const {
  std::vector<StoredRecord> all;
  for (auto t : kAllTables) {
    RecordQuery q;
    q.from_seq = from_seq;
    auto part = query(t, q);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
  return all;
}

std::int64_t Store::last_seq() const {
  std::lock_guard lock(write_mu_);
  return next_seq_ - 1;
}

std::size_t Store::count(Table table) const {
  std::scoped_lock lock(read_mu_);
  std::unique_lock<std::mutex> wlock;
  if (reader_ == writer_) wlock = std::unique_lock(write_mu_);
  Statement st(reader_, "SELECT COUNT(*) FROM " + std::string(to_string(table)) + ";");
  st.step();
  return static_cast<std::size_t>(st.int_col(0));
}

void Store::export_table(Table table, std::ostream& out) const {
  for (const auto& r : query(table)) out << Json(r).dump() << '\n';
}

std::size_t Store::compact(TimestampMs before, std::ostream& archive) {
  std::set<std::string> resolved;
  for (const auto& r : query(Table::trades)) {
    if (r.source == "settle") resolved.insert(r.market_id);
  }
  for (const auto& r : query(Table::commands)) {
    if (r.source == "resolve_market" && !r.market_id.empty()) resolved.insert(r.market_id);
  }
  std::size_t moved = 0;
  for (auto t : kAllTables) {
    if (t == Table::commands || t == Table::risk_days) continue;
    RecordQuery q;
    q.to_ts = before - 1;
    for (const auto& r : query(t, q)) {
      if (!resolved.contains(r.market_id)) continue;
      archive << Json(r).dump() << '\n';
      std::lock_guard lock(write_mu_);
      Statement st(writer_, "DELETE FROM " + std::string(to_string(t)) + " WHERE seq = ?;");
      st.bind(1, r.seq);
      st.step();
      ++moved;
    }
  }
  archive.flush();
  return moved;
}

std::unique_ptr<Ledger> replay_ledger(const Store& store, double starting_bankroll_usdc, TimestampMs opened_at,
                                      std::int64_t from_seq) {
  auto ledger = std::make_unique<Ledger>(starting_bankroll_usdc, opened_at);
  RecordQuery q;
  q.from_seq = from_seq;
  for (const auto& r : store.query(Table::trades, q)) ledger->apply(r.payload.get<LedgerEvent>());
  return ledger;
}

std::optional<RiskState> replay_risk_state(const Store& store) {
  const auto rows = store.query(Table::risk_days);
  if (rows.empty()) return std::nullopt;
  return rows.back().payload.get<RiskRecord>().state;
}

}  // namespace polyswarm
