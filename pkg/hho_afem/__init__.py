from hho_afem.config import Config

config = Config()
log_level = None  # Log level options: DEBUG, INFO
num_threads = None  # 0 or None: resolved from HHO_AFEM_NUM_THREADS, then cpu count

from hho_afem import error  # noqa
from hho_afem.afem import *  # noqa
from hho_afem.fem import *  # noqa
from hho_afem.model import *  # noqa
from hho_afem.version import VERSION  # noqa
