#pragma once

#include "fnn/error.hpp"
#include "fnn/random.hpp"
#include "fnn/funcore.hpp"
#include "fnn/smoothing.hpp"
#include "fnn/basis.hpp"
#include "fnn/layers.hpp"
#include "fnn/model.hpp"
#include "fnn/engine.hpp"
#include "fnn/datagen.hpp"
#include "fnn/baseline.hpp"
#include "fnn/eval.hpp"
#include "fnn/io.hpp"
#include "fnn/experiment.hpp"
