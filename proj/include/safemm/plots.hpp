#pragma once

#include "safemm/sim.hpp"

#include <string>
#include <vector>

namespace safemm {

/// Writes clearance.svg (distances and speed scale over time), band.svg
/// (end-effector trace of the band over time) and a few top-down
/// snapshot_<tick>.svg files into `dir`. Snapshot groups use world
/// coordinates directly, so circle centers equal the trace positions.
/// An empty trace yields the same files with an empty-plot note.
/// Returns the written paths.
std::vector<std::string> export_plots(const std::vector<TraceRecord>& rows, const std::string& dir,
                                      int snapshots = 6);

}  // namespace safemm
