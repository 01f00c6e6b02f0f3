#include "dmpc/plotdata.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace dmpc {

namespace {

std::string get(const TraceRecord& r, const std::string& key) {
  const auto it = r.fields.find(key);
  return it == r.fields.end() ? std::string() : it->second;
}

bool parse_num(const std::string& s, double& out) {
  const char* b = s.data();
  const auto [p, ec] = std::from_chars(b, b + s.size(), out);
  return ec == std::errc() && p == b + s.size();
}

}  // namespace

std::vector<PlotFile> plot_files(const std::vector<TraceRecord>& events) {
  std::vector<const TraceRecord*> sorted;
  sorted.reserve(events.size());
  for (const TraceRecord& r : events) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const TraceRecord* a, const TraceRecord* b) {
                     if (a->k != b->k) return a->k < b->k;
                     return a->agent < b->agent;
                   });

  std::string errors = "k,agent,e_x,e_y,e_th\n";
  std::string controls = "k,agent,u_v,u_w\n";
  std::string gaps = "k,agent_a,agent_b,gap\n";
  std::string raster = "k,agent\n";
  std::string traj = "k,agent,px,py,theta,ref_x,ref_y\n";

  // sync values per step, ordered by agent id, for the pairwise gaps
  std::map<int, std::map<int, double>> sync_at;

  for (const TraceRecord* r : sorted) {
    const std::string k = std::to_string(r->k);
    const std::string id = std::to_string(r->agent);
    switch (r->kind) {
      case EventKind::Sample: {
        errors += k + "," + id + "," + get(*r, "e_x") + "," + get(*r, "e_y") +
                  "," + get(*r, "e_th") + "\n";
        traj += k + "," + id + "," + get(*r, "px") + "," + get(*r, "py") +
                "," + get(*r, "theta") + "," + get(*r, "ref_x") + "," +
                get(*r, "ref_y") + "\n";
        double s = 0.0;
        if (parse_num(get(*r, "s"), s)) sync_at[r->k][r->agent] = s;
        break;
      }
      case EventKind::Apply:
        controls += k + "," + id + "," + get(*r, "u_v") + "," +
                    get(*r, "u_w") + "\n";
        break;
      case EventKind::Solve:
        raster += k + "," + id + "\n";
        break;
      default:
        break;
    }
  }

  for (const auto& [k, by_agent] : sync_at)
    for (auto a = by_agent.begin(); a != by_agent.end(); ++a)
      for (auto b = std::next(a); b != by_agent.end(); ++b)
        gaps += std::to_string(k) + "," + std::to_string(a->first) + "," +
                std::to_string(b->first) + "," +
                fmt_double(std::abs(a->second - b->second)) + "\n";

  return {{"errors.csv", std::move(errors)},
          {"controls.csv", std::move(controls)},
          {"sync_gaps.csv", std::move(gaps)},
          {"triggers.csv", std::move(raster)},
          {"trajectories.csv", std::move(traj)}};
}

void write_plot_files(const std::string& dir,
                      const std::vector<PlotFile>& files) {
  std::filesystem::create_directories(dir);
  for (const PlotFile& f : files) {
    std::ofstream out(std::filesystem::path(dir) / f.name,
                      std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + f.name + " in " + dir);
    out << f.content;
  }
}

}  // namespace dmpc
