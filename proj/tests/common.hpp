#pragma once

#include "sckd/config.hpp"

namespace sckd::test {

/// Small scene and network so training tests run in seconds.
inline RunConfig tiny_config() {
  RunConfig c;
  c.scene.n_objects = {2, 1, 1};
  c.scene.x_min = 2.0;
  c.scene.x_max = 12.0;
  c.scene.y_min = -5.0;
  c.scene.y_max = 5.0;
  c.scene.n_clutter = 2;
  for (VoxelGridSpec* g : {&c.model.lidar_grid, &c.model.radar_grid}) {
    g->range_min = {0.0, -6.4, -3.0};
    g->range_max = {12.8, 6.4, 1.0};
  }
  c.model.encoder.conv3d_channels = {4};
  c.model.encoder.out_channels = 8;
  c.model.neck.mid_channels = 8;
  c.model.neck.up_channels = 8;
  c.dataset = {4, 0, 2};
  c.train.teacher_epochs = 2;
  c.train.student_epochs = 2;
  c.train.batch_size = 2;
  c.eval.corridor = {0.0, 12.0, -4.0, 4.0};
  return c;
}

}  // namespace sckd::test
