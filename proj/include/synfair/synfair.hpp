#pragma once

#include "synfair/attribution.hpp"
#include "synfair/balancing.hpp"
#include "synfair/cohort.hpp"
#include "synfair/common.hpp"
#include "synfair/diffusion.hpp"
#include "synfair/io.hpp"
#include "synfair/metrics.hpp"
#include "synfair/pipeline.hpp"
#include "synfair/recognizer.hpp"
#include "synfair/stats.hpp"
