from squidbench.commands.analyze_command import AnalyzeCommand
from squidbench.commands.campaign_command import CampaignCommand
from squidbench.commands.command import Command
from squidbench.commands.report_command import ReportCommand
from squidbench.commands.synth_command import SynthCommand
from squidbench.commands.transport_command import TransportCommand
from squidbench.commands.xsec_command import XsecCommand
