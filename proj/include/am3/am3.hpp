#pragma once

#include "am3/autodiff.hpp"
#include "am3/checkpoint.hpp"
#include "am3/csv.hpp"
#include "am3/dataset.hpp"
#include "am3/embedding.hpp"
#include "am3/episode.hpp"
#include "am3/errors.hpp"
#include "am3/gradcheck.hpp"
#include "am3/model.hpp"
#include "am3/optim.hpp"
#include "am3/plot.hpp"
#include "am3/stats.hpp"
#include "am3/synthetic.hpp"
#include "am3/tensor.hpp"
#include "am3/trainer.hpp"
