#pragma once

#include "vadet/autograd.hpp"
#include "vadet/checkpoint.hpp"
#include "vadet/clustering.hpp"
#include "vadet/config.hpp"
#include "vadet/corpus.hpp"
#include "vadet/gaussian.hpp"
#include "vadet/log.hpp"
#include "vadet/metrics.hpp"
#include "vadet/model.hpp"
#include "vadet/objectives.hpp"
#include "vadet/optim.hpp"
#include "vadet/pipeline.hpp"
#include "vadet/plot.hpp"
#include "vadet/rng.hpp"
#include "vadet/synthgen.hpp"
#include "vadet/trainer.hpp"
