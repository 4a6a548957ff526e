#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polyswarm/aggregation.hpp"
#include "polyswarm/analysis.hpp"
#include "polyswarm/clock.hpp"
#include "polyswarm/control.hpp"
#include "polyswarm/domain.hpp"
#include "polyswarm/execution.hpp"
#include "polyswarm/json_codec.hpp"
#include "polyswarm/risk.hpp"
#include "polyswarm/swarm.hpp"

struct sqlite3;

namespace polyswarm {

enum class Table { snapshots, predictions, consensus, signals, trades, risk_days, commands };

inline constexpr std::array kAllTables{Table::snapshots, Table::predictions, Table::consensus, Table::signals,
                                Table::trades,    Table::risk_days,   Table::commands};

std::string_view to_string(Table t);
Table table_from_string(std::string_view s);

// A consensus decision as persisted: the forecast at decision time plus its
// divergence scores. Never recomputed after the fact.
struct ConsensusRecord {
  std::uint64_t cycle_id = 0;
  SwarmConsensus consensus;
  DivergenceReport divergence;
};

void to_json(Json& j, const ConsensusRecord& r);
void from_json(const Json& j, ConsensusRecord& r);

struct RiskRecord {
  RiskState state;
  std::string reason;  // fill, rollover, suspend, resume, ...
  TimestampMs at = 0;
};

void to_json(Json& j, const RiskRecord& r);
void from_json(const Json& j, RiskRecord& r);

struct StoredRecord {
  Table table = Table::snapshots;
  std::int64_t seq = 0;
  TimestampMs ts = 0;
  std::string market_id;
  std::string source;
  Json payload;
};

void to_json(Json& j, const StoredRecord& r);

struct RecordQuery {
  std::optional<TimestampMs> from_ts;  // inclusive
  std::optional<TimestampMs> to_ts;    // inclusive
  std::optional<std::string> market_id;
  std::optional<std::string> source;
  std::optional<std::int64_t> from_seq;  // inclusive
};

// Append-only store over SQLite. Each table has columns
// (seq INTEGER PRIMARY KEY, ts_ms, market_id, source, payload JSON). Sequence
// numbers come from one store-wide counter, so they increase within every
// table and give replay a total order across tables. Appends are durable
// (synchronous=FULL) before they return. One serialized writer; readers use
// a separate connection.
class Store {
 public:
  explicit Store(const std::string& path);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  // Validates the payload against its table's record type, then writes it.
  // Throws ValidationError for invalid records and StorageError for I/O.
  std::int64_t append(Table table, TimestampMs ts, const std::string& market_id, const std::string& source,
                      const Json& payload);

  std::int64_t append(const MarketSnapshot& s);
  std::int64_t append(const AgentPrediction& p);
  std::int64_t append(const ConsensusRecord& c);
  std::int64_t append(const ArbitrageSignal& s);
  std::int64_t append(const LedgerEvent& e);
  std::int64_t append(const RiskRecord& r);
  std::int64_t append(const ControlCommand& c);

  std::vector<StoredRecord> query(Table table, const RecordQuery& q = {}) const;
  // Every record with seq >= from_seq across all tables, in seq order.
  std::vector<StoredRecord> replay(std::int64_t from_seq = 0) const;
  std::int64_t last_seq() const;
  std::size_t count(Table table) const;

  // Line-delimited JSON, one StoredRecord per line.
  void export_table(Table table, std::ostream& out) const;

  // Moves records of resolved markets older than `before` to the archive
  // stream (line-delimited JSON) and deletes them. Returns the number moved.
  std::size_t compact(TimestampMs before, std::ostream& archive);

  const std::string& path() const { return path_; }

 private:
  std::vector<StoredRecord> run_query(sqlite3* db, const std::string& sql,
                                      const std::vector<std::string>& text_args,
                                      const std::vector<std::int64_t>& int_args, Table table) const;

  std::string path_;
  sqlite3* writer_ = nullptr;
  sqlite3* reader_ = nullptr;
  mutable std::mutex write_mu_;
  mutable std::mutex read_mu_;
  std::int64_t next_seq_ = 1;
};

// Validates a payload for the given table by decoding it into its type.
void validate_payload(Table table, const Json& payload);

// Folds the trades table back into a ledger.
std::unique_ptr<Ledger> replay_ledger(const Store& store, double starting_bankroll_usdc, TimestampMs opened_at,
                                      std::int64_t from_seq = 0);

// Latest persisted risk state, if any.
std::optional<RiskState> replay_risk_state(const Store& store);

}  // namespace polyswarm
