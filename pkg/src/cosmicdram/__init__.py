from cosmicdram._version import __version__
from cosmicdram.core.data_objects import Dataset, NeutronSeries, Topology
from cosmicdram.manager import StudyManager
