#include "refgrid/observation.hpp"

#include <fmt/format.h>

namespace refgrid {

std::string lateral_label(int lateral) {
  if (lateral < 0) return fmt::format("L{}", -lateral);
  if (lateral > 0) return fmt::format("R{}", lateral);
  return "0";
}

std::string ego_label(EgoPos p) { return fmt::format("ahead {}, {}", p.ahead, lateral_label(p.lateral)); }

Position ego_to_world(const Pose& pose, EgoPos p) {
  return pose.pos + p.ahead * forward_offset(pose.facing) + p.lateral * right_offset(pose.facing);
}

const FovCell& Observation::at(EgoPos p) const {
  return cells.at(static_cast<std::size_t>(p.ahead * view.width + p.lateral + half_width()));
}

std::optional<EgoPos> Observation::ego_of(Position world) const {
  Offset f = forward_offset(pose.facing);
  Offset r = right_offset(pose.facing);
  int dc = world.col - pose.pos.col;
  int dr = world.row - pose.pos.row;
  EgoPos p{dc * f.dcol + dr * f.drow, dc * r.dcol + dr * r.drow};
  if (!contains(p)) return std::nullopt;
  return p;
}

bool Observation::sees(Position world) const {
  auto p = ego_of(world);
  return p && at(*p).visible;
}

Observation observe(const World& world, int segment) {
  Observation obs;
  obs.view = world.meta().view_size;
  obs.pose = world.agent();
  obs.carrying = world.inventory();
  obs.step_index = world.step_count();
  obs.segment = segment;
  obs.level_id = world.meta().id;
  if (!world.history().empty()) obs.last_action = world.history().back();
  obs.events = world.last_events();

  const int depth = obs.view.depth;
  const int width = obs.view.width;
  const int half = width / 2;
  const bool see_through = world.meta().see_through_walls;
  obs.cells.resize(static_cast<std::size_t>(depth * width));

  std::vector<char> opaque(obs.cells.size(), 0);
  for (int d = 0; d < depth; ++d) {
    for (int l = -half; l <= half; ++l) {
      auto idx = static_cast<std::size_t>(d * width + l + half);
      Position wp = ego_to_world(obs.pose, {d, l});
      FovCell& fc = obs.cells[idx];
      fc.world = wp;
      if (!world.in_bounds(wp)) {
        opaque[idx] = 1;
        continue;
      }
      const Cell& c = world.cell(wp);
      if (c.tiles.dark || (!see_through && c.object && !is_transparent(*c.object))) opaque[idx] = 1;
    }
  }
  // The agent always sees out of its own cell.
  const auto agent_idx = static_cast<std::size_t>(half);
  opaque[agent_idx] = 0;

  std::vector<char> mask(obs.cells.size(), 0);
  auto id = [&](int d, int i) { return static_cast<std::size_t>(d * width + i); };
  mask[agent_idx] = 1;
  for (int d = 0; d < depth; ++d) {
    for (int i = 0; i < width - 1; ++i) {
      if (!mask[id(d, i)] || opaque[id(d, i)]) continue;
      mask[id(d, i + 1)] = 1;
      if (d + 1 < depth) {
        mask[id(d + 1, i + 1)] = 1;
        mask[id(d + 1, i)] = 1;
      }
    }
    for (int i = width - 1; i > 0; --i) {
      if (!mask[id(d, i)] || opaque[id(d, i)]) continue;
      mask[id(d, i - 1)] = 1;
      if (d + 1 < depth) {
        mask[id(d + 1, i - 1)] = 1;
        mask[id(d + 1, i)] = 1;
      }
    }
    // a single column has no sideways pass to carry light forward
    if (width == 1 && d + 1 < depth && mask[id(d, 0)] && !opaque[id(d, 0)]) mask[id(d + 1, 0)] = 1;
  }

  for (std::size_t i = 0; i < obs.cells.size(); ++i) {
    FovCell& fc = obs.cells[i];
    if (!mask[i] || !world.in_bounds(fc.world)) continue;
    const Cell& c = world.cell(fc.world);
    if (c.tiles.dark && i != agent_idx) continue;
    fc.visible = true;
    fc.object = c.object;
    fc.tiles = c.tiles;
  }

  for (int r = 0; r < world.height(); ++r) {
    for (int c = 0; c < world.width(); ++c) {
      Position p{c, r};
      const auto& o = world.cell(p).object;
      if (!o || !is_testimony(o->kind)) continue;
      bool in_view = obs.sees(p);
      if (o->kind == ObjectKind::signpost && !in_view) continue;
      Testimony t{o->kind, o->color, o->text, o->stated_accuracy, p, std::nullopt, std::nullopt};
      if (in_view) {
        EgoPos e = *obs.ego_of(p);
        t.ahead = e.ahead;
        t.lateral = e.lateral;
      }
      obs.testimony.push_back(std::move(t));
    }
  }
  return obs;
}

}  // namespace refgrid
