#pragma once

#include "dictlab/dictionary.hpp"
#include "dictlab/errors.hpp"
#include "dictlab/experiment.hpp"
#include "dictlab/hungarian.hpp"
#include "dictlab/lasso.hpp"
#include "dictlab/learn.hpp"
#include "dictlab/model.hpp"
#include "dictlab/operators.hpp"
#include "dictlab/parallel.hpp"
#include "dictlab/perturbation.hpp"
#include "dictlab/rng.hpp"
#include "dictlab/support_algebra.hpp"
#include "dictlab/theory.hpp"
#include "dictlab/theory_check.hpp"
