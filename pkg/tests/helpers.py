import copy

import yaml

BAR = {
    "case": "bar",
    "material": {"preset": "center_notched"},
    "mesh": {"generator": "rectangle", "params": {"width": 20.0, "height": 4.0, "nx": 4, "ny": 1}},
    "boundary": [
        {"set": "left", "component": "x"},
        {"set": "origin", "component": "y"},
        {"set": "right", "component": "x", "scale": 1.0},
    ],
    "program": {"times": [0, 1, 2], "values": [0.0, 0.002, 0.0005], "initial_increment": 0.25},
    "output": {"directory": "runs/bar", "snapshots": "extrema"},
}


def bar_config(**overrides):
    data = copy.deepcopy(BAR)
    for key, value in overrides.items():
        data[key] = value
    return data


def write_config(path, data):
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path
