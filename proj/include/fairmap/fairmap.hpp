// Umbrella header: the whole library.
#pragma once

#include "fairmap/core.hpp"
#include "fairmap/correspondence.hpp"
#include "fairmap/dataset.hpp"
#include "fairmap/experiment.hpp"
#include "fairmap/histogram.hpp"
#include "fairmap/kdtree.hpp"
#include "fairmap/mapping.hpp"
#include "fairmap/metrics.hpp"
#include "fairmap/regularizers.hpp"
#include "fairmap/scoring.hpp"
#include "fairmap/synthetic.hpp"
