#pragma once

#include "hhmm/baselines.hpp"
#include "hhmm/clustering.hpp"
#include "hhmm/core.hpp"
#include "hhmm/dataset.hpp"
#include "hhmm/inference.hpp"
#include "hhmm/learning.hpp"
#include "hhmm/model_io.hpp"
#include "hhmm/model_selection.hpp"
#include "hhmm/report.hpp"
#include "hhmm/sampling.hpp"
#include "hhmm/time_format.hpp"
