// SPDX-License-Identifier: Apache-2.0
#include "core/memplan.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <nlohmann/json.hpp>

#include "core/common.hpp"

namespace tinyquant::memplan {

using nlohmann::json;

long long tensor_size_bytes(int bits, int cardinality) {
  const long long total_bits = static_cast<long long>(bits) * cardinality;
  return (total_bits + 7) / 8;
}

std::vector<LiveRange> live_ranges(const std::vector<ir::Instruction>& instrs,
                                   const ir::Program& program, const exec::Assignment& rho,
                                   std::vector<std::string>* warnings) {
  std::vector<LiveRange> ranges;
  auto last_use = [&](const std::string& name) {
    int last = -1;
    for (const auto& instr : instrs)
      for (const auto& src : instr.srcs)
        if (src == name) last = instr.index;
    return last;
  };
  auto push = [&](const std::string& name, int def_index) {
    LiveRange range;
    range.name = name;
    range.size_bytes = tensor_size_bytes(rho.at(name), program.shape_of(name).cardinality());
    range.start = def_index;
    const int last = last_use(name);
    if (last < def_index) {
      if (warnings)
        warnings->push_back("tensor '" + name + "' is defined but never used");
      range.end = def_index;
    } else {
      range.end = last;
    }
    ranges.push_back(std::move(range));
  };

  if (program.input) push(program.input->name, 0);
  for (const auto& instr : instrs)
    if (!instr.is_return) push(instr.dest, instr.index);
  return ranges;
}

long long lower_bound(const std::vector<LiveRange>& ranges) {
  long long best = 0;
  for (const auto& probe : ranges) {
    // Peaks can only occur at range starts.
    long long stacked = 0;
    for (const auto& r : ranges)
      if (r.start <= probe.start && probe.start <= r.end) stacked += r.size_bytes;
    best = std::max(best, stacked);
  }
  return best;
}

namespace {

bool time_overlap(const LiveRange& a, const LiveRange& b) {
  return a.start <= b.end && b.start <= a.end;
}

}  // namespace

MemoryMap solve_first_fit(const std::vector<LiveRange>& ranges) {
  MemoryMap map;
  map.method = "first_fit";
  std::vector<int> order(ranges.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return ranges[a].start < ranges[b].start; });

  struct Placed {
    long long offset, size;
    int index;
  };
  std::vector<Placed> placed;
  for (int idx : order) {
    const LiveRange& t = ranges[idx];
    std::vector<Placed> blockers;
    for (const auto& p : placed)
      if (time_overlap(ranges[p.index], t)) blockers.push_back(p);
    std::sort(blockers.begin(), blockers.end(),
              [](const Placed& a, const Placed& b) { return a.offset < b.offset; });
    long long offset = 0;
    for (const auto& b : blockers) {
      if (b.offset >= offset + t.size_bytes) break;  // gap fits
      offset = std::max(offset, b.offset + b.size);
    }
    placed.push_back(Placed{offset, t.size_bytes, idx});
    map.offsets[t.name] = offset;
    map.peak = std::max(map.peak, offset + t.size_bytes);
  }
  return map;
}

// ---------------------------------------------------------------------------
// Exact cover over the canvas (Algorithm X, dancing links)

namespace {

struct Timeout {};

// Columns: one per tensor (must be covered by exactly one placement row)
// followed by one per canvas cell. Placement rows cover the tensor column
// plus every cell of the rectangle; each cell additionally owns a unit
// filler row so packings that leave gaps still form exact covers.
class CanvasSolver {
 public:
  CanvasSolver(const std::vector<LiveRange>& units, const std::vector<int>& tensor_order,
               long long height_units, int width,
               std::chrono::steady_clock::time_point deadline)
      : units_(units), order_(tensor_order), height_(height_units), width_(width),
        deadline_(deadline) {
    const long long cells = height_ * width_;
    columns_ = static_cast<int>(units_.size() + cells);
    init_headers();
    for (int t : order_)
      for (long long off = 0; off + units_[t].size_bytes <= height_; ++off)
        add_placement(t, off);
    for (long long c = 0; c < cells; ++c)
      add_filler(static_cast<int>(units_.size() + c));
  }

  bool solve(std::map<int, long long>* offsets) {
    if (!search()) return false;
    for (long long row : solution_)
      if (row >= 0) {
        const int t = static_cast<int>(row / (height_ + 1));
        const long long off = row % (height_ + 1);
        (*offsets)[t] = off;
      }
    return true;
  }

 private:
  struct Node {
    int l, r, u, d, col;
    long long row;
  };

  void init_headers() {
    // Node 0 is the root; headers are 1..columns_.
    nodes_.resize(columns_ + 1);
    count_.assign(columns_ + 1, 0);
    covered_.assign(columns_ + 1, false);
    for (int i = 0; i <= columns_; ++i) {
      nodes_[i].l = (i + columns_) % (columns_ + 1);
      nodes_[i].r = (i + 1) % (columns_ + 1);
      nodes_[i].u = nodes_[i].d = i;
      nodes_[i].col = i;
      nodes_[i].row = -1;
    }
  }

  int new_node(int col_header, long long row) {
    const int id = static_cast<int>(nodes_.size());
    Node n;
    n.col = col_header;
    n.row = row;
    n.u = nodes_[col_header].u;
    n.d = col_header;
    nodes_[nodes_[col_header].u].d = id;
    nodes_[col_header].u = id;
    n.l = n.r = id;
    nodes_.push_back(n);
    ++count_[col_header];
    return id;
  }

  void link_row(const std::vector<int>& row_nodes) {
    for (size_t i = 0; i + 1 < row_nodes.size(); ++i) {
      nodes_[row_nodes[i]].r = row_nodes[i + 1];
      nodes_[row_nodes[i + 1]].l = row_nodes[i];
    }
    nodes_[row_nodes.back()].r = row_nodes.front();
    nodes_[row_nodes.front()].l = row_nodes.back();
  }

  int cell_header(long long y, int x) const {
    return 1 + static_cast<int>(units_.size()) + static_cast<int>(y * width_ + x);
  }

  void add_placement(int t, long long offset) {
    const long long row = static_cast<long long>(t) * (height_ + 1) + offset;
    std::vector<int> row_nodes;
    row_nodes.push_back(new_node(1 + t, row));
    for (long long y = offset; y < offset + units_[t].size_bytes; ++y)
      for (int x = units_[t].start; x <= units_[t].end; ++x)
        row_nodes.push_back(new_node(cell_header(y, x), row));
    link_row(row_nodes);
  }

  void add_filler(int column_index) {
    new_node(1 + column_index, -1);  // single-node row, already self-linked
  }

  void cover(int c) {
    covered_[c] = true;
    nodes_[nodes_[c].r].l = nodes_[c].l;
    nodes_[nodes_[c].l].r = nodes_[c].r;
    for (int i = nodes_[c].d; i != c; i = nodes_[i].d)
      for (int j = nodes_[i].r; j != i; j = nodes_[j].r) {
        nodes_[nodes_[j].d].u = nodes_[j].u;
        nodes_[nodes_[j].u].d = nodes_[j].d;
        --count_[nodes_[j].col];
      }
  }

  void uncover(int c) {
    for (int i = nodes_[c].u; i != c; i = nodes_[i].u)
      for (int j = nodes_[i].l; j != i; j = nodes_[j].l) {
        ++count_[nodes_[j].col];
        nodes_[nodes_[j].d].u = j;
        nodes_[nodes_[j].u].d = j;
      }
    nodes_[nodes_[c].r].l = c;
    nodes_[nodes_[c].l].r = c;
    covered_[c] = false;
  }

  bool search() {
    // Tensors are attacked in decreasing rectangle area; once all are
    // placed the leftover cell columns hold only their filler rows, so
    // completion is forced and conflict-free.
    int chosen = -1;
    for (int t : order_)
      if (!covered_[1 + t]) {
        chosen = 1 + t;
        break;
      }
    if (chosen < 0) {
      for (int c = nodes_[0].r; c != 0; c = nodes_[0].r) {
        solution_.push_back(nodes_[nodes_[c].d].row);
        cover(c);
      }
      return true;  // covers stay applied; the caller reads the solution
    }
    if (count_[chosen] == 0) return false;

    cover(chosen);
    for (int r = nodes_[chosen].d; r != chosen; r = nodes_[r].d) {
      if (++steps_ % 1024 == 0 && std::chrono::steady_clock::now() > deadline_) throw Timeout{};
      solution_.push_back(nodes_[r].row);
      for (int j = nodes_[r].r; j != r; j = nodes_[j].r) cover(nodes_[j].col);
      if (search()) return true;
      for (int j = nodes_[r].l; j != r; j = nodes_[j].l) uncover(nodes_[j].col);
      solution_.pop_back();
    }
    uncover(chosen);
    return false;
  }

  std::vector<LiveRange> units_;
  std::vector<int> order_;
  long long height_;
  int width_;
  std::chrono::steady_clock::time_point deadline_;
  int columns_ = 0;
  std::vector<Node> nodes_;
  std::vector<int> count_;
  std::vector<bool> covered_;
  std::vector<long long> solution_;
  long long steps_ = 0;
};

}  // namespace

MemoryMap solve_exact(const std::vector<LiveRange>& ranges, int coarsen, double timeout_secs) {
  if (coarsen < 1) throw Error("coarsening constant must be >= 1", "memplan");
  MemoryMap map;
  map.method = "exact";
  map.optimal = true;
  if (ranges.empty()) return map;
  for (const auto& r : ranges)
    if (r.size_bytes < 1 || r.start > r.end)
      throw Error("invalid live range for tensor '" + r.name + "'", "memplan");

  // Canvas in units of the coarsening constant.
  std::vector<LiveRange> units = ranges;
  int width = 0;
  long long total_units = 0;
  for (auto& u : units) {
    u.size_bytes = (u.size_bytes + coarsen - 1) / coarsen;
    total_units += u.size_bytes;
    width = std::max(width, u.end + 1);
  }

  std::vector<int> order(units.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  auto area = [&](int i) {
    return units[i].size_bytes * (units[i].end - units[i].start + 1);
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (area(a) != area(b)) return area(a) > area(b);
    return units[a].size_bytes > units[b].size_bytes;
  });

  const auto deadline =
      std::chrono::steady_clock::now() +
      std::chrono::milliseconds(static_cast<long long>(timeout_secs * 1000.0));

  try {
    for (long long height = lower_bound(units); height <= total_units; ++height) {
      if (std::chrono::steady_clock::now() > deadline) throw Timeout{};
      if (height * width > 8'000'000)
        throw Error("canvas too large for the exact planner; raise the coarsening constant",
                    "memplan");
      CanvasSolver solver(units, order, height, width, deadline);
      std::map<int, long long> offsets;
      if (solver.solve(&offsets)) {
        for (const auto& [t, off] : offsets)
          map.offsets[ranges[t].name] = off * coarsen;
        map.peak = height * coarsen;
        return map;
      }
    }
  } catch (const Timeout&) {
    MemoryMap fallback = solve_first_fit(ranges);
    fallback.method = "first_fit_after_timeout";
    fallback.optimal = false;
    return fallback;
  }
  throw Error("exact planner failed to find a cover", "memplan");  // unreachable
}

// ---------------------------------------------------------------------------
// Brute-force oracle

long long brute_force_min(const std::vector<LiveRange>& ranges, long long cap) {
  if (ranges.size() > 8) throw Error("instance too large for the brute-force oracle", "memplan");
  if (ranges.empty()) return 0;
  const int n = static_cast<int>(ranges.size());
  std::vector<std::vector<bool>> conflicts(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      conflicts[i][j] = i != j && time_overlap(ranges[i], ranges[j]);

  long long best = solve_first_fit(ranges).peak;
  const long long lb = lower_bound(ranges);
  std::vector<long long> offsets(n, -1);

  // Searches normalized packings only: tensors placed in nondecreasing
  // offset order, each resting at zero or on top of a conflicting tensor.
  // Any packing can be pushed down into this form without raising the peak,
  // so the search is exhaustive for the minimum.
  auto dfs = [&](auto&& self, unsigned placed_mask, long long peak, long long last_offset,
                 int last_index) -> void {
    if (std::max(peak, lb) >= best) return;
    if (placed_mask == (1u << n) - 1u) {
      best = peak;
      return;
    }
    for (int t = 0; t < n; ++t) {
      if (placed_mask & (1u << t)) continue;
      std::set<long long> candidates{0};
      for (int j = 0; j < n; ++j)
        if ((placed_mask & (1u << j)) && conflicts[t][j])
          candidates.insert(offsets[j] + ranges[j].size_bytes);
      for (long long off : candidates) {
        if (off < last_offset) continue;
        if (off == last_offset && t < last_index) continue;
        if (off + ranges[t].size_bytes > cap) continue;
        bool clash = false;
        for (int j = 0; j < n && !clash; ++j)
          if ((placed_mask & (1u << j)) && conflicts[t][j] &&
              off < offsets[j] + ranges[j].size_bytes && offsets[j] < off + ranges[t].size_bytes)
            clash = true;
        if (clash) continue;
        offsets[t] = off;
        self(self, placed_mask | (1u << t), std::max(peak, off + ranges[t].size_bytes), off, t);
        offsets[t] = -1;
      }
    }
  };
  dfs(dfs, 0u, 0, 0, -1);
  if (best > cap) throw Error("no packing within the brute-force cap", "memplan");
  return best;
}

bool map_is_valid(const MemoryMap& map, const std::vector<LiveRange>& ranges) {
  for (const auto& r : ranges) {
    const auto it = map.offsets.find(r.name);
    if (it == map.offsets.end()) return false;
    if (it->second < 0 || it->second + r.size_bytes > map.peak) return false;
  }
  for (size_t i = 0; i < ranges.size(); ++i)
    for (size_t j = i + 1; j < ranges.size(); ++j) {
      if (!time_overlap(ranges[i], ranges[j])) continue;
      const long long a = map.offsets.at(ranges[i].name);
      const long long b = map.offsets.at(ranges[j].name);
      if (a < b + ranges[j].size_bytes && b < a + ranges[i].size_bytes) return false;
    }
  return true;
}

// ---------------------------------------------------------------------------
// Trace and map serialization

std::vector<LiveRange> trace_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error(std::string("trace: ") + e.what(), "io");
  }
  if (!doc.is_object() || !doc.contains("tensors") || !doc["tensors"].is_array())
    throw Error("trace: expected {\"tensors\": [...]}", "io");
  std::vector<LiveRange> ranges;
  for (const auto& t : doc["tensors"]) {
    LiveRange r;
    r.name = t.at("name").get<std::string>();
    r.size_bytes = t.at("size_bytes").get<long long>();
    r.start = t.at("start").get<int>();
    r.end = t.at("end").get<int>();
    if (r.size_bytes < 1) throw Error("trace: size_bytes must be >= 1 for '" + r.name + "'", "io");
    if (r.start < 0 || r.end < r.start)
      throw Error("trace: bad live range for '" + r.name + "'", "io");
    ranges.push_back(std::move(r));
  }
  return ranges;
}

std::string trace_to_json(const std::vector<LiveRange>& ranges) {
  json doc;
  doc["tensors"] = json::array();
  for (const auto& r : ranges)
    doc["tensors"].push_back(
        {{"name", r.name}, {"size_bytes", r.size_bytes}, {"start", r.start}, {"end", r.end}});
  return doc.dump(2);
}

std::string map_to_json(const MemoryMap& map) {
  json doc;
  doc["peak_bytes"] = map.peak;
  doc["offsets"] = json::object();
  for (const auto& [name, offset] : map.offsets) doc["offsets"][name] = offset;
  doc["optimal"] = map.optimal;
  doc["method"] = map.method;
  return doc.dump(2);
}

}  // namespace tinyquant::memplan
