#include "dmpc/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmpc {

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Sample: return "sample";
    case EventKind::Solve: return "solve";
    case EventKind::Apply: return "apply";
    case EventKind::Broadcast: return "broadcast";
    case EventKind::TriggerDecision: return "trigger-decision";
    case EventKind::HookResult: return "hook-result";
  }
  return "unknown";
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

int trace_verbosity_from_env() {
  const char* env = std::getenv("DMPC_TRACE_VERBOSITY");
  if (!env) return 1;
  const int v = std::atoi(env);
  return v < 0 ? 0 : (v > 2 ? 2 : v);
}

const std::vector<std::string>& TraceWriter::columns() {
  static const std::vector<std::string> cols = {
      "k",       "agent",  "kind",    "mode",   "e_x",     "e_y",
      "e_th",    "s",      "px",      "py",     "theta",   "ref_x",
      "ref_y",   "u_v",    "u_w",     "m",      "literal_m",
      "limiting", "next_instant",     "status", "iters",   "kkt",
      "J",       "H",      "coupling", "phi",   "s_first", "s_last",
      "hook",    "pass",   "value",   "bound",  "note",    "detail"};
  return cols;
}

const char* TraceWriter::version_line() { return "# dmpc-trace v1"; }

void TraceWriter::add(TraceRecord r) {
  if (verbosity_ == 0 &&
      (r.kind == EventKind::Sample || r.kind == EventKind::Apply ||
       r.kind == EventKind::Broadcast))
    return;
  if (verbosity_ < 2) r.fields.erase("detail");
  records_.push_back(std::move(r));
}

namespace {

void write_file(const std::string& path,
                const std::vector<const TraceRecord*>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file " + path);
  out << TraceWriter::version_line() << "\n";
  const auto& cols = TraceWriter::columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    out << cols[i] << (i + 1 < cols.size() ? "," : "\n");
  for (const TraceRecord* r : rows) {
    out << r->k << "," << r->agent << "," << to_string(r->kind);
    for (std::size_t i = 3; i < cols.size(); ++i) {
      out << ",";
      const auto it = r->fields.find(cols[i]);
      if (it != r->fields.end()) out << it->second;
    }
    out << "\n";
  }
}

}  // namespace

void TraceWriter::write(const std::string& dir,
                        const std::vector<int>& agent_ids) const {
  std::filesystem::create_directories(dir);
  std::vector<const TraceRecord*> sorted;
  sorted.reserve(records_.size());
  for (const auto& r : records_) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const TraceRecord* a, const TraceRecord* b) {
                     if (a->k != b->k) return a->k < b->k;
                     if (a->agent != b->agent) return a->agent < b->agent;
                     return static_cast<int>(a->kind) <
                            static_cast<int>(b->kind);
                   });
  write_file(dir + "/events.csv", sorted);
  for (int id : agent_ids) {
    std::vector<const TraceRecord*> mine;
    for (const TraceRecord* r : sorted)
      if (r->agent == id) mine.push_back(r);
    write_file(dir + "/agent_" + std::to_string(id) + ".csv", mine);
  }
}

std::vector<TraceRecord> read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read trace file " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# dmpc-trace", 0) != 0)
    throw std::runtime_error("trace file missing version line: " + path);
  if (!std::getline(in, line))
    throw std::runtime_error("trace file missing header: " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  for (const std::string& required : TraceWriter::columns())
    if (std::find(header.begin(), header.end(), required) == header.end())
      throw std::runtime_error("trace file missing column '" + required +
                               "': " + path);
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(header.size());
    TraceRecord r;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == "k") r.k = std::atoi(cells[i].c_str());
      else if (header[i] == "agent") r.agent = std::atoi(cells[i].c_str());
      else if (header[i] == "kind") {
        bool found = false;
        for (int kk = 0; kk <= 5; ++kk) {
          if (cells[i] == to_string(static_cast<EventKind>(kk))) {
            r.kind = static_cast<EventKind>(kk);
            found = true;
            break;
          }
        }
        if (!found)
          throw std::runtime_error("trace row with unknown kind '" + cells[i] +
                                   "': " + path);
      } else if (!cells[i].empty()) {
        r.fields[header[i]] = cells[i];
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dmpc
