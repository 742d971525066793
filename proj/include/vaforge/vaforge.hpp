#pragma once

#include "vaforge/errors.hpp"
#include "vaforge/rng.hpp"
#include "vaforge/parallel.hpp"
#include "vaforge/csv.hpp"
#include "vaforge/params.hpp"
#include "vaforge/matrix.hpp"
#include "vaforge/core_data.hpp"
#include "vaforge/text_features.hpp"
#include "vaforge/tabular_text.hpp"
#include "vaforge/learners.hpp"
#include "vaforge/metrics.hpp"
#include "vaforge/fusion.hpp"
#include "vaforge/hpo.hpp"
#include "vaforge/sufficiency.hpp"
#include "vaforge/synthetic.hpp"
#include "vaforge/pipeline.hpp"
