#pragma once

#include "fans/datasets.hpp"
#include "fans/error.hpp"
#include "fans/heatmap.hpp"
#include "fans/metrics.hpp"
#include "fans/model.hpp"
#include "fans/model_io.hpp"
#include "fans/optimize.hpp"
#include "fans/parallel.hpp"
#include "fans/perturb.hpp"
#include "fans/pns.hpp"
#include "fans/random.hpp"
#include "fans/sir.hpp"
#include "fans/train.hpp"
#include "fans/vector.hpp"
