#pragma once

// Umbrella header for the survival-risk contrast-learning toolkit.

#include "moc/checkpoint.hpp"
#include "moc/cohort_io.hpp"
#include "moc/common.hpp"
#include "moc/graph.hpp"
#include "moc/metrics.hpp"
#include "moc/numarray.hpp"
#include "moc/objectives.hpp"
#include "moc/params.hpp"
#include "moc/predictors.hpp"
#include "moc/rng.hpp"
#include "moc/runner.hpp"
#include "moc/survival.hpp"
#include "moc/svg.hpp"
#include "moc/synth.hpp"
#include "moc/trainer.hpp"
