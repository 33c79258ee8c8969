from setuptools import find_packages, setup

if __name__ == "__main__":
    setup(
        name='agegraph',
        version='0.1.0',
        description='Masked contrastive graph learning over image patches for age estimation',
        license='Apache 2.0',
        packages=find_packages(exclude=['tests']),
        install_requires=['numpy>=1.20', 'Pillow', 'context-var'],
        entry_points={'console_scripts': ['agegraph=agegraph.cli:main']},
        setup_requires=['pytest-runner'],
        tests_require=['pytest', 'pytest-ordering'],
        zip_safe=False)
