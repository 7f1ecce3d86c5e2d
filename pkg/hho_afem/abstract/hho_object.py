import json
from typing import List, Tuple

import numpy as np

from hho_afem import util


class HHOObject(dict):
    """Dictionary with attribute access used for reports and records.

    Subclasses list their keys in ``_fields``; construction validates the
    entries named in ``_required_fields``.
    """

    class ReprJSONEncoder(json.JSONEncoder):
        def default(self, obj):
            if isinstance(obj, np.integer):
                return int(obj)
            if isinstance(obj, np.floating):
                return float(obj)
            if isinstance(obj, np.ndarray):
                return obj.tolist()
            return super(HHOObject.ReprJSONEncoder, self).default(obj)

    _fields: Tuple[str, ...] = ()
    _required_fields: Tuple[str, ...] = ()
    _object_type: str = ""

    def __init__(self, **params):
        super(HHOObject, self).__init__()
        self._init_volatile_fields(**params)

    def _init_volatile_fields(self, **params) -> None:
        self._init_volatile_fields_validate(
            [(key, params.get(key, None)) for key in self._required_fields]
        )
        self._init_volatile_fields_load(
            [(key, params.get(key, None)) for key in self._fields]
        )
        for key, value in params.items():
            if key not in self:
                self[key] = value

    def _init_volatile_fields_validate(self, items: List[Tuple[str, any]]):
        util.validate_arguments_require_all(items)

    def _init_volatile_fields_load(self, fields: List[Tuple[str, any]]):
        for k, v in fields:
            self[k] = v

    def __str__(self):
        return json.dumps(
            self.to_dict_deep(),
            sort_keys=True,
            indent=2,
            cls=self.ReprJSONEncoder,
        )

    def to_dict(self):
        return dict(self)

    def to_dict_deep(self):
        def obj_to_dict(val):
            if isinstance(val, HHOObject):
                return val.to_dict_deep()
            if isinstance(val, list):
                return list(map(obj_to_dict, val))
            return val

        return {k: obj_to_dict(v) for k, v in self.items()}

    def __setattr__(self, k, v):
        if k[0] == "_" or k in self.__dict__:
            return super(HHOObject, self).__setattr__(k, v)

        self[k] = v
        return None

    def __getattr__(self, k):
        if k[0] == "_":
            raise AttributeError(k)

        try:
            return self[k]
        except KeyError as err:
            raise AttributeError(*err.args)

    def __delattr__(self, k):
        if k[0] == "_" or k in self.__dict__:
            return super(HHOObject, self).__delattr__(k)
        else:
            del self[k]
