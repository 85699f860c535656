#pragma once

#include "sgdd/error.hpp"
#include "sgdd/sparse_grid.hpp"
#include "sgdd/grid_graph.hpp"
#include "sgdd/cuts.hpp"
#include "sgdd/detectors.hpp"
#include "sgdd/engine.hpp"
#include "sgdd/synth_data.hpp"
#include "sgdd/nn_layers.hpp"
#include "sgdd/network.hpp"
#include "sgdd/training.hpp"
#include "sgdd/model_io.hpp"
#include "sgdd/nn_detector.hpp"
#include "sgdd/evaluation.hpp"
#include "sgdd/report.hpp"
