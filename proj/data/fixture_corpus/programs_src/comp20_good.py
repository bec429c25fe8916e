# Source: Article 20 of the Interpretation on Personal Injury Compensation Liability.
# Inputs:
#   average_annual_salary (decimal, yuan): Average annual salary of employees in the same or a similar industry in the previous year.
#   lost_days (integer, day): Number of days of work lost by the victim.
# Outputs:
#   lost_wages (decimal, yuan): Lost wages owed to a victim who cannot prove a fixed income.
import json
import sys

payload = json.load(sys.stdin)
inputs = payload["inputs"]
salary = inputs.get("average_annual_salary")
days = inputs.get("lost_days")
if salary is None or days is None:
    raise ValueError("missing required inputs")
# The law states lost wages follow the industry average annual salary divided by 365 days times the lost days.
lost_wages = round(salary / 365.0 * days, 4)
print(json.dumps({"outputs": {"lost_wages": lost_wages}}))
