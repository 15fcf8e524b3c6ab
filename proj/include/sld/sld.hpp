#pragma once

// Library umbrella header. The command-line layer lives in sld/cli.hpp.

#include "sld/error.hpp"
#include "sld/evaluation.hpp"
#include "sld/face_tree.hpp"
#include "sld/geodesic.hpp"
#include "sld/geometry.hpp"
#include "sld/landmark_io.hpp"
#include "sld/landmarks.hpp"
#include "sld/mesh_io.hpp"
#include "sld/pipeline.hpp"
#include "sld/preprocess.hpp"
#include "sld/primitives.hpp"
#include "sld/remesh.hpp"
#include "sld/section.hpp"
#include "sld/segmentation.hpp"
#include "sld/surface_nets.hpp"
#include "sld/synth.hpp"
#include "sld/trimesh.hpp"
#include "sld/types.hpp"
