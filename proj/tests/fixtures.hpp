// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "digestmap/detection.hpp"

namespace fixture {

inline digestmap::det::Detection make(std::string id, digestmap::det::DetClass cls, double x, double y,
                                      double score, double w = 100.0, double h = 100.0, double angle = 0.0) {
  digestmap::det::Detection d;
  d.id = std::move(id);
  d.cls = cls;
  d.score = score;
  d.box = digestmap::geom::OrientedBox::make({x, y}, w, h, angle);
  d.tile_id = "t0";
  d.crs = "EPSG:2154";
  return d;
}

inline digestmap::det::Detection site(std::string id, double x, double y, double score,
                                      double w = 100.0, double h = 100.0) {
  return make(std::move(id), digestmap::det::DetClass::site, x, y, score, w, h);
}

inline digestmap::det::Detection tank(std::string id, double x, double y, double score, double side = 10.0) {
  return make(std::move(id), digestmap::det::DetClass::tank, x, y, score, side, side);
}

inline digestmap::det::Detection pile(std::string id, double x, double y, double score) {
  return make(std::move(id), digestmap::det::DetClass::pile, x, y, score, 30.0, 10.0);
}

inline digestmap::det::GroundTruthSite gt(std::string id, double x, double y) {
  digestmap::det::GroundTruthSite g;
  g.id = std::move(id);
  g.location = {x, y};
  return g;
}

}  // namespace fixture
