import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="sglaplacian",
    version="0.1.0",
    description="Steerable graph Laplacian: rotationally-invariant manifold harmonics and dataset filtering",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=("tests",)),
    install_requires=[
        "click>=6.0",
        "colorama",
        "numpy>=1.17",
        "scipy>=1.4",
    ],
    extras_require={
        "test": ["hypothesis"],
    },
    entry_points={
        'console_scripts': [
            'sgl = sglaplacian.cli:sgl_cli',
        ],
    },
    classifiers=(
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ),
)
