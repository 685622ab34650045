from setuptools import setup, find_packages

setup(
    name="acns-slip",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.12",
        "pydantic>=2.0",
        "prometheus_client>=0.16.0",
        "python-json-logger>=2.0.4",
        'tomli>=2.0; python_version < "3.11"',
    ],
    entry_points={"console_scripts": ["acns=src.cli:main"]},
    python_requires=">=3.10",
)
