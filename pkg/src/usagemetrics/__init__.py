"""Download-based research-activity indicators from scholarly clickstream logs."""
from .clickstream import Action, Channel, LogRecord, ParseError, RobotPolicy, parse_log_line
from .cohort import CohortCategory, CohortConfig, Entity, EntityMap, UsageAggregate, accumulate, classify
from .corpus import MAIN_JOURNALS, Corpus, JournalSet, Publication
from .indicators import (EntityYearSets, IndicatorError, build_entity_year_sets, h_index, obsolescence_curve,
                         overlap_fraction, pearson_r, random_overlap_baseline)
from .pipeline import ingest_files, ingest_lines
from .synth import CommunityModel, default_model, generate_corpus, generate_logs

__version__ = "0.1.0"
