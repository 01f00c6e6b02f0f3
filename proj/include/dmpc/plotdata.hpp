#pragma once
#include <string>
#include <vector>

#include "dmpc/trace.hpp"

namespace dmpc {

struct PlotFile {
  std::string name;
  std::string content;
};

// Plot-ready tables derived from a merged event trace: tracking errors,
// applied controls, pairwise sync gaps, trigger raster, plane trajectories.
// Pure function of the records; identical input gives identical bytes.
std::vector<PlotFile> plot_files(const std::vector<TraceRecord>& events);

void write_plot_files(const std::string& dir,
                      const std::vector<PlotFile>& files);

}  // namespace dmpc
