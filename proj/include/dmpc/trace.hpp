#pragma once
#include <map>
#include <string>
#include <vector>

namespace dmpc {

enum class EventKind {
  Sample = 0,
  Solve = 1,
  Apply = 2,
  Broadcast = 3,
  TriggerDecision = 4,
  HookResult = 5,
};
const char* to_string(EventKind k);

// One trace row: fixed identity columns plus sparse payload cells keyed by
// column name. Values are stored pre-formatted (fmt_double for numbers).
struct TraceRecord {
  int k = 0;
  int agent = 0;
  EventKind kind = EventKind::Sample;
  std::map<std::string, std::string> fields;
};

// Shortest round-trip decimal form (std::to_chars).
std::string fmt_double(double v);

// DMPC_TRACE_VERBOSITY: 0 sparse (solver/trigger/hook events only),
// 1 default (everything except the detail column), 2 full.
int trace_verbosity_from_env();

class TraceWriter {
 public:
  explicit TraceWriter(int verbosity = 1) : verbosity_(verbosity) {}

  void add(TraceRecord r);
  // events.csv plus agent_<id>.csv per agent, all rows sorted by
  // (k, agent, kind); identical inputs produce identical bytes.
  void write(const std::string& dir, const std::vector<int>& agent_ids) const;

  const std::vector<TraceRecord>& records() const { return records_; }
  static const std::vector<std::string>& columns();
  static const char* version_line();  // "# dmpc-trace v1"

 private:
  int verbosity_ = 1;
  std::vector<TraceRecord> records_;
};

// Parses a wide-CSV trace file written by TraceWriter; throws
// std::runtime_error naming the first missing required column.
std::vector<TraceRecord> read_trace(const std::string& path);

}  // namespace dmpc
